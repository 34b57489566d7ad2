//! Client side of the model-sidecar protocol (v1): wire bodies, a conformance
//! checker, a retrying blocking client, adapters that expose sidecars through
//! the core backend traits, and an in-process mock sidecar for tests.

pub mod adapters;
pub mod client;
pub mod mock;
pub mod protocol;

pub use adapters::{resolve_backends, RemoteDetector, RemoteMatting, RemoteSegmenter};
pub use client::{health, remote_invoke, ClientLimits};
pub use protocol::{EncodedImage, RequestKind, ResponsePayload, SidecarRequest, SidecarResponse};
