use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

/// Every failure the API reports. Serialized as `{code, message}`.
#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("image could not be decoded: {0}")]
    BadImage(String),
    #[error("unknown checkpoint {0:?}")]
    UnknownCheckpoint(String),
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("session has no revision {0}")]
    UnknownRevision(u64),
    #[error("click ({row}, {col}) outside the {height}x{width} image")]
    OutOfBounds { row: usize, col: usize, height: usize, width: usize },
    #[error("no click to undo")]
    NothingToUndo,
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

#[derive(Serialize)]
struct Body<'a> {
    code: &'a str,
    message: String,
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::BadImage(_) => "bad_image",
            ApiError::UnknownCheckpoint(_) => "unknown_checkpoint",
            ApiError::UnknownSession(_) => "unknown_session",
            ApiError::UnknownRevision(_) => "unknown_revision",
            ApiError::OutOfBounds { .. } => "out_of_bounds",
            ApiError::NothingToUndo => "nothing_to_undo",
            ApiError::BadRequest(_) => "bad_request",
            ApiError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadImage(_) | ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::UnknownCheckpoint(_) | ApiError::UnknownSession(_) | ApiError::UnknownRevision(_) => StatusCode::NOT_FOUND,
            ApiError::OutOfBounds { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::NothingToUndo => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<iseg_core::Error> for ApiError {
    fn from(e: iseg_core::Error) -> Self {
        match e {
            iseg_core::Error::OutOfBounds { row, col, height, width } => ApiError::OutOfBounds { row, col, height, width },
            iseg_core::Error::ShapeMismatch { .. } | iseg_core::Error::InvalidParams(_) => ApiError::BadRequest(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(Body { code: self.code(), message: self.to_string() })).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
