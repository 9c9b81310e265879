use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use gae_core::Error as CoreError;

/// Error body: `{"error": {"code": ..., "message": ..., "offenders": [...]}}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offenders: Option<Vec<String>>,
}

#[derive(Serialize)]
struct Envelope<'a> {
    error: &'a ApiError,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            offenders: None,
        }
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found() -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
    }

    /// Maps a core error, naming offending avatars where the error carries
    /// an index.
    pub fn from_core(err: CoreError, name_of: impl Fn(usize) -> String) -> Self {
        let message = err.to_string();
        let (status, code, offenders) = match &err {
            CoreError::UnknownAvatar(names) => (StatusCode::BAD_REQUEST, "unknown_avatar", Some(names.clone())),
            CoreError::OverlappingRosters(id) => {
                (StatusCode::BAD_REQUEST, "overlapping_rosters", Some(vec![name_of(*id)]))
            }
            CoreError::DuplicateAvatar(id) => (StatusCode::BAD_REQUEST, "duplicate_avatar", Some(vec![name_of(*id)])),
            CoreError::SelfPair(id) => (StatusCode::BAD_REQUEST, "self_pair", Some(vec![name_of(*id)])),
            CoreError::RosterSize { .. } => (StatusCode::BAD_REQUEST, "roster_size", None),
            CoreError::AvatarOutOfRange { .. } | CoreError::InvalidInput(_) | CoreError::InvalidConfig(_) => {
                (StatusCode::BAD_REQUEST, "invalid_request", None)
            }
            e if e.is_numerical() => (StatusCode::UNPROCESSABLE_ENTITY, "degenerate_model", None),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal", None),
        };
        Self {
            status,
            code,
            message,
            offenders,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(Envelope { error: &self })).into_response()
    }
}
