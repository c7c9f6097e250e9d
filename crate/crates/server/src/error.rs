use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use flowclass_core::game::GameError;
use serde::{Deserialize, Serialize};

/// Wire error: `{"error": {"code": ..., "message": ...}}`.
#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "malformed_body", message)
    }

    pub fn unauthorized(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", message)
    }

    pub fn too_large(limit: usize) -> Self {
        Self::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "body_too_large",
            format!("request body exceeds {limit} bytes"),
        )
    }

    pub fn storage(err: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_failure", err.to_string())
    }
}

impl From<GameError> for ApiError {
    fn from(e: GameError) -> Self {
        let (status, code) = match &e {
            GameError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            GameError::UnknownSession => (StatusCode::UNAUTHORIZED, "unknown_session"),
            GameError::AccessDenied => (StatusCode::FORBIDDEN, "access_denied"),
            GameError::Unavailable(_) => (StatusCode::CONFLICT, "game_unavailable"),
            GameError::WrongPhase { .. } => (StatusCode::CONFLICT, "wrong_phase"),
            GameError::OrderViolation(_) => (StatusCode::CONFLICT, "order_violation"),
            GameError::InvalidReference(_) => (StatusCode::BAD_REQUEST, "invalid_reference"),
            GameError::InvalidInput(_) => (StatusCode::BAD_REQUEST, "invalid_input"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code.to_owned(),
                message: self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}
