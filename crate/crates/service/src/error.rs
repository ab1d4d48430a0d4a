use crate::resource::Status;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

/// An error response. The body always carries `error` and `status`.
#[derive(Debug, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub code: StatusCode,
    pub message: String,
    pub status: Option<Status>,
}

impl ApiError {
    pub fn new(code: StatusCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            status: None,
        }
    }

    pub fn with_status(mut self, status: Status) -> Self {
        self.status = Some(status);
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session {id:?}"))
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl From<alif_core::Error> for ApiError {
    fn from(e: alif_core::Error) -> Self {
        use alif_core::Error as E;
        let code = match &e {
            E::Config(_) | E::Domain(_) | E::FeatureMismatch { .. } | E::Plan(_) => StatusCode::BAD_REQUEST,
            E::Parse { .. } | E::Format(_) | E::InvalidLabel(_) => StatusCode::UNPROCESSABLE_ENTITY,
            E::BudgetExhausted(_) => StatusCode::GONE,
            E::Protocol(_) | E::Abstained(_) => StatusCode::CONFLICT,
            E::Io(_) | E::Json(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        Self::internal(format!("storage: {e}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.code.is_server_error() {
            log::error!("{}", self.message);
        }
        let body = json!({ "error": self.message, "status": self.status });
        (self.code, Json(body)).into_response()
    }
}
