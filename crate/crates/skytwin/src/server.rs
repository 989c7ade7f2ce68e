//! Read-only HTTP API over a running pipeline.

use std::future::Future;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use skytwin_core::pipeline::TwinHandle;
use skytwin_core::view::SnapshotView;
use tokio::net::TcpListener;

#[derive(Clone)]
struct AppState {
    handle: TwinHandle,
    retry_after_s: u64,
}

/// `GET /v1/snapshot/latest` and `GET /v1/metrics`. Before the first tick
/// the snapshot endpoint answers 503 with `Retry-After` set to one interval.
pub fn router(handle: TwinHandle, retry_after_s: u64) -> Router {
    Router::new()
        .route("/v1/snapshot/latest", get(latest_snapshot))
        .route("/v1/metrics", get(metrics))
        .with_state(AppState { handle, retry_after_s: retry_after_s.max(1) })
}

async fn latest_snapshot(State(state): State<AppState>) -> Response {
    match state.handle.latest() {
        Some(snapshot) => Json(SnapshotView::from_snapshot(&snapshot)).into_response(),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            [(header::RETRY_AFTER, state.retry_after_s.to_string())],
            Json(serde_json::json!({"error": "no completed tick yet"})),
        )
            .into_response(),
    }
}

async fn metrics(State(state): State<AppState>) -> Response {
    Json(state.handle.metrics()).into_response()
}

pub async fn serve(
    listener: TcpListener,
    handle: TwinHandle,
    retry_after_s: u64,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(handle, retry_after_s)).with_graceful_shutdown(shutdown).await
}
