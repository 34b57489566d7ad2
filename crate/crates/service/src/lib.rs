//! Stateful matting sessions over HTTP and the `mattelab` command-line tool.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod guidance;
pub mod session;

pub use config::ServiceConfig;
pub use error::ServiceError;
pub use session::{ArtifactName, Engine, Session, SessionStore, SessionView};
