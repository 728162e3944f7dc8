use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use iotsam_core::{CampaignError, DocumentError, FilterError, HarnessError, StoreError};
use serde::Serialize;

/// Error body of every failed request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
    pub correlation_id: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        let error = Self {
            status: status.as_u16(),
            code: code.into(),
            message: message.into(),
            correlation_id: uuid::Uuid::new_v4().to_string(),
        };
        if status.is_server_error() {
            tracing::error!(correlation_id = %error.correlation_id, code = %error.code, "{}", error.message);
        } else {
            tracing::debug!(correlation_id = %error.correlation_id, code = %error.code, "{}", error.message);
        }
        error
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", message)
    }
}

/// HTTP status of a module error code.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "NOT_FOUND" | "UNKNOWN_ENTRY" | "UNKNOWN_SCHEME" => StatusCode::NOT_FOUND,
        "WRONG_STATE" | "DUPLICATE_ENTRY" | "LOCKED" | "NOT_ASSESSED" | "EXECUTION_RUNNING" => StatusCode::CONFLICT,
        "IO" | "CORRUPT_LOG" | "INVALID_SCHEME" | "SINK" | "INTERNAL" | "INVALID_PARALLELISM" => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
        _ => StatusCode::BAD_REQUEST,
    }
}

fn from_code(code: &str, message: String) -> ApiError {
    ApiError::new(status_for(code), code, message)
}

impl From<CampaignError> for ApiError {
    fn from(e: CampaignError) -> Self {
        from_code(e.code(), e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        from_code(e.code(), e.to_string())
    }
}

impl From<HarnessError> for ApiError {
    fn from(e: HarnessError) -> Self {
        from_code(e.code(), e.to_string())
    }
}

impl From<DocumentError> for ApiError {
    fn from(e: DocumentError) -> Self {
        from_code(e.code(), e.to_string())
    }
}

impl From<FilterError> for ApiError {
    fn from(e: FilterError) -> Self {
        from_code(e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}
