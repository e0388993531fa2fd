//! HTTP API for interactive segmentation sessions.
//!
//! | method | path | body / query | returns |
//! |---|---|---|---|
//! | `POST` | `/sessions` | multipart: `image` (PNG), optional `gt` (PNG), `policy` (JSON), `checkpoint` | revision 0 |
//! | `POST` | `/sessions/{id}/clicks` | `{"row", "col", "polarity": "foreground" \| "background"}` | new revision |
//! | `GET` | `/sessions/{id}/mask` | `?revision=` | stored revision |
//! | `POST` | `/sessions/{id}/undo` | | new revision without the last click |
//! | `GET` | `/checkpoints` | | checkpoint metadata |
//!
//! Masks come back as JSON with a base64 PNG, or as the raw PNG when the
//! request sends `Accept: image/png`. Errors are `{"code", "message"}`.

mod api;
mod config;
mod error;
mod registry;
mod session;

pub use api::{router, spawn_sweeper, AppState, ClickRequest, ClickView, MaskResponse};
pub use config::{ConfigError, ServiceConfig};
pub use error::{ApiError, ApiResult};
pub use registry::{CheckpointInfo, CheckpointRegistry};
pub use session::{PaddedShape, Revision, Session, SharedModel};

/// Bind and serve until the process is stopped.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let addr = format!("{}:{}", config.host, config.port);
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    tracing::info!(%addr, checkpoints = %config.checkpoint_dir.display(), "listening");
    let state = AppState::new(config);
    spawn_sweeper(state.clone());
    axum::serve(listener, router(state)).await
}
