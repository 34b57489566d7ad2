use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure talking to an external model sidecar.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RemoteError {
    /// Connection, timeout or server-side (5xx) failure. Retryable.
    #[error("transport failure: {0}")]
    Transport(String),
    /// The sidecar answered, but the answer breaks the wire protocol. Never retried.
    #[error("protocol violation at `{field}`: {detail}")]
    ProtocolViolation { field: String, detail: String },
    /// The request was not sent because it is malformed. Never retried.
    #[error("invalid sidecar request: {0}")]
    InvalidRequest(String),
    /// The sidecar refused the request (4xx).
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
}

impl RemoteError {
    pub fn protocol(field: impl Into<String>, detail: impl Into<String>) -> Self {
        RemoteError::ProtocolViolation {
            field: field.into(),
            detail: detail.into(),
        }
    }

    pub fn is_transport(&self) -> bool {
        matches!(self, RemoteError::Transport(_))
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid guidance: {0}")]
    InvalidGuidance(String),

    #[error("codec error: {0}")]
    Codec(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverConvergence { iterations: usize, residual: f64 },

    #[error("under-constrained system: trimap has no known pixels")]
    UnderConstrained,

    #[error("no detection above threshold for caption `{caption}`")]
    NoDetection { caption: String },

    #[error("backend `{backend}` failed: {source}")]
    Remote {
        backend: String,
        #[source]
        source: RemoteError,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
