use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use soundscape_core::agent::AgentError;
use soundscape_core::audio::{RenderError, WavError};
use soundscape_core::catalog::CatalogError;
use soundscape_core::project::ProjectError;
use soundscape_core::scene::SceneError;
use soundscape_core::store::StoreError;
use soundscape_core::timeline::TimelineError;

/// An error as sent over the wire: `{"error": kind, "message": text}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn bad_body(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_body", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    fn storage(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INSUFFICIENT_STORAGE, "storage_failure", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.kind, "message": self.message });
        (self.status, Json(body)).into_response()
    }
}

const CONFLICT: StatusCode = StatusCode::CONFLICT;
const UNPROCESSABLE: StatusCode = StatusCode::UNPROCESSABLE_ENTITY;

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError::not_found(e.to_string()),
            StoreError::Corrupt { .. } | StoreError::Io(_) => ApiError::storage(e.to_string()),
        }
    }
}

impl From<SceneError> for ApiError {
    fn from(e: SceneError) -> Self {
        let msg = e.to_string();
        match e {
            SceneError::UnsupportedFormat(_) => {
                ApiError::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_format", msg)
            }
            SceneError::CorruptImage(_) => ApiError::new(UNPROCESSABLE, "corrupt_image", msg),
            SceneError::DetectorUnavailable(_) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "detector_unavailable", msg)
            }
            SceneError::OutOfBounds { .. } => ApiError::new(UNPROCESSABLE, "out_of_bounds", msg),
            SceneError::InvalidLabel(_) => ApiError::new(UNPROCESSABLE, "invalid_label", msg),
        }
    }
}

impl From<CatalogError> for ApiError {
    fn from(e: CatalogError) -> Self {
        let msg = e.to_string();
        match e {
            CatalogError::Wav(WavError::UnsupportedEncoding(_)) => {
                ApiError::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_encoding", msg)
            }
            CatalogError::Wav(WavError::InvalidWav(_)) => ApiError::new(UNPROCESSABLE, "invalid_wav", msg),
            CatalogError::TooShort => ApiError::new(UNPROCESSABLE, "too_short", msg),
            CatalogError::Label(inner) => inner.into(),
            CatalogError::UnknownObject(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_object", msg),
            CatalogError::UnknownAsset(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_asset", msg),
            CatalogError::RoleMismatch { .. } => ApiError::new(UNPROCESSABLE, "role_mismatch", msg),
            CatalogError::GainOutOfRange(_) => ApiError::new(UNPROCESSABLE, "gain_out_of_range", msg),
            CatalogError::PageSizeOutOfRange(_) => ApiError::new(UNPROCESSABLE, "page_size_out_of_range", msg),
            CatalogError::Manifest { .. } | CatalogError::Io(_) => ApiError::storage(msg),
        }
    }
}

impl From<TimelineError> for ApiError {
    fn from(e: TimelineError) -> Self {
        let msg = e.to_string();
        let kind = match e {
            TimelineError::NoMusicSelected => "no_music_selected",
            TimelineError::AlreadyRecording => "already_recording",
            TimelineError::NotRecording => "not_recording",
            TimelineError::NotStopped => "not_stopped",
            TimelineError::ConfirmationRequired => "confirmation_required",
            TimelineError::UnboundObject(_) => "unbound_object",
            TimelineError::ClockBeforeStart { .. } => "clock_before_start",
            TimelineError::PastCap(_) => "past_cap",
            TimelineError::IndexOutOfRange { .. } => "index_out_of_range",
            TimelineError::GainOutOfRange(_) => "gain_out_of_range",
            TimelineError::MissingAsset(_) => "missing_asset",
        };
        let status = match e {
            TimelineError::NoMusicSelected
            | TimelineError::AlreadyRecording
            | TimelineError::NotRecording
            | TimelineError::NotStopped
            | TimelineError::ConfirmationRequired => CONFLICT,
            _ => UNPROCESSABLE,
        };
        ApiError::new(status, kind, msg)
    }
}

impl From<AgentError> for ApiError {
    fn from(e: AgentError) -> Self {
        let msg = e.to_string();
        match e {
            AgentError::StateViolation { .. } => ApiError::new(CONFLICT, "state_violation", msg),
            AgentError::NoImage => ApiError::new(CONFLICT, "no_image", msg),
            AgentError::EmptyBrief => ApiError::new(UNPROCESSABLE, "empty_brief", msg),
            AgentError::BackendFailure(_) => ApiError::new(StatusCode::BAD_GATEWAY, "backend_failure", msg),
            AgentError::UnknownOption(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_option", msg),
            AgentError::Catalog(inner) => inner.into(),
        }
    }
}

impl From<RenderError> for ApiError {
    fn from(e: RenderError) -> Self {
        let msg = e.to_string();
        match e {
            RenderError::EmptyTimeline => ApiError::new(CONFLICT, "empty_timeline", msg),
            RenderError::MissingAsset(_) => ApiError::new(UNPROCESSABLE, "missing_asset", msg),
            RenderError::InvalidAsset { .. } => ApiError::new(UNPROCESSABLE, "invalid_asset", msg),
            RenderError::EmptySource(_) => ApiError::new(UNPROCESSABLE, "empty_source", msg),
            RenderError::UnsupportedRate(_) => ApiError::new(UNPROCESSABLE, "unsupported_rate", msg),
        }
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        let msg = e.to_string();
        match e {
            ProjectError::NoTimeline => ApiError::new(CONFLICT, "no_timeline", msg),
            ProjectError::NotStopped => ApiError::new(CONFLICT, "not_stopped", msg),
            ProjectError::Render(inner) => inner.into(),
        }
    }
}
