use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use mattelab_core::pipeline::{Stage, StageError};
use mattelab_core::Error as CoreError;
use serde_json::json;
use thiserror::Error;

/// Failures of session operations, each mapping to one HTTP status.
#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("not found: {0}")]
    NotFound(String),
    /// The operation is not possible in the session's current state.
    #[error("conflict: {0}")]
    Conflict(String),
    /// The request is well-formed but its content is invalid.
    #[error("validation failed: {0}")]
    Validation(String),
    /// The request body could not be decoded.
    #[error("bad request: {0}")]
    BadRequest(String),
    /// A pipeline step failed.
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: CoreError,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<StageError> for ServiceError {
    fn from(e: StageError) -> Self {
        ServiceError::Stage {
            stage: e.stage,
            source: e.source,
        }
    }
}

impl ServiceError {
    pub fn at(stage: Stage) -> impl FnOnce(CoreError) -> ServiceError {
        move |source| ServiceError::Stage { stage, source }
    }

    /// Maps input decoding failures of the core to request-level errors.
    pub fn from_input(e: CoreError) -> Self {
        match e {
            CoreError::Codec(_) | CoreError::UnsupportedFormat(_) => ServiceError::BadRequest(e.to_string()),
            other => ServiceError::Validation(other.to_string()),
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Stage { source, .. } => match source {
                CoreError::Remote { .. } => StatusCode::BAD_GATEWAY,
                CoreError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
                _ => StatusCode::UNPROCESSABLE_ENTITY,
            },
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            ServiceError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = json!({
            "error": self.to_string(),
            "stage": self.stage(),
        });
        (self.status(), Json(body)).into_response()
    }
}
