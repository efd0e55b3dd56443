//! HTTP and WebSocket API for live stylization of loaded scenes.
//!
//! All routes live under `/v1`. Styles are uploaded once and referenced by
//! the hex digest of their source bytes; stylizing a scene swaps in new
//! per-Gaussian colors that every later frame renders from.

mod error;
mod routes;
mod state;
mod stream;

use std::future::Future;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;

pub use error::ApiError;
pub use routes::{FrameRequest, StylizeRequest};
pub use state::{AppState, Counters, SceneEntry, ServerConfig, Snapshot, StylizeReport};
pub use stream::CLOSE_UNLOADED;

/// Builds the `/v1` router.
pub fn router(state: AppState) -> Router {
    let limit = state.config.max_upload;
    let v1 = Router::new()
        .route("/healthz", get(routes::healthz))
        .route("/scenes", get(routes::list_scenes))
        .route("/scenes/{id}", get(routes::get_scene).delete(routes::delete_scene))
        .route("/scenes/{id}/stylize", post(routes::stylize))
        .route("/scenes/{id}/frame", get(routes::get_frame).post(routes::post_frame))
        .route("/scenes/{id}/stream", get(stream::stream))
        .route("/styles", get(routes::list_styles).post(routes::upload_style))
        .route("/styles/{id}", get(routes::get_style).delete(routes::delete_style))
        .layer(DefaultBodyLimit::max(limit));
    Router::new().nest("/v1", v1).with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
