//! REST service: upload an image, run a detector, explain one detection in a
//! background job, then score the saliency map.
//!
//! All state lives under the configured data directory: content-addressed
//! artifacts, job files and the latest detection list per image and backend.
//! The API is described by `openapi.json`, also served at
//! `/api/openapi.json`.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use odexai::detectors::DetectorError;
use thiserror::Error;

mod api;
pub mod config;
pub mod jobs;
pub mod registry;
pub mod store;

pub use api::{router, AppState};
pub use config::ServiceConfig;
pub use jobs::{Job, JobKind, JobManager, JobState, RESTART_ERROR};
pub use store::{content_ref, ArtifactStore};

/// The published OpenAPI description.
pub const OPENAPI: &str = include_str!("../openapi.json");

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("unknown artifact {0:?}")]
    UnknownArtifact(String),
    #[error("unknown backend {0:?}")]
    UnknownBackend(String),
    #[error("unknown image {0:?}")]
    UnknownImage(String),
    #[error("unknown job {0:?}")]
    UnknownJob(String),
    #[error("not a decodable image: {0}")]
    BadImage(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("body exceeds the upload limit")]
    TooLarge,
    #[error("target index is stale: {0}")]
    TargetIndexStale(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("job queue is full")]
    QueueFull,
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<DetectorError> for ServiceError {
    fn from(e: DetectorError) -> Self {
        ServiceError::BackendUnavailable(e.to_string())
    }
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        use ServiceError::*;
        match self {
            BadImage(_) | BadRequest(_) => StatusCode::BAD_REQUEST,
            TooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            UnknownArtifact(_) | UnknownBackend(_) | UnknownImage(_) | UnknownJob(_) => StatusCode::NOT_FOUND,
            TargetIndexStale(_) => StatusCode::CONFLICT,
            DimensionMismatch(_) => StatusCode::UNPROCESSABLE_ENTITY,
            QueueFull => StatusCode::TOO_MANY_REQUESTS,
            BackendUnavailable(_) => StatusCode::BAD_GATEWAY,
            Config(_) | Internal(_) | Io(_) | Json(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    /// Stable machine-readable name, the `error` field of error bodies.
    pub fn code(&self) -> &'static str {
        use ServiceError::*;
        match self {
            Config(_) => "Config",
            UnknownArtifact(_) => "UnknownArtifact",
            UnknownBackend(_) => "UnknownBackend",
            UnknownImage(_) => "UnknownImage",
            UnknownJob(_) => "UnknownJob",
            BadImage(_) => "BadImage",
            BadRequest(_) => "BadRequest",
            TooLarge => "TooLarge",
            TargetIndexStale(_) => "TargetIndexStale",
            DimensionMismatch(_) => "DimensionMismatch",
            QueueFull => "QueueFull",
            BackendUnavailable(_) => "BackendUnavailable",
            Internal(_) | Io(_) | Json(_) => "Internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        let body = serde_json::json!({ "error": self.code(), "message": self.to_string() });
        (status, Json(body)).into_response()
    }
}

/// Binds `config.bind` and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let bind = config.bind;
    let state = AppState::open(config)?;
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
