//! Read-only HTTP/JSON API over a workspace of stored runs.
//!
//! Nothing is propagated in-request: every endpoint post-processes stored
//! HF fields. Heavy work runs on the blocking pool; the cache makes
//! duplicate concurrent requests compute once.

pub mod api;
pub mod cache;
pub mod error;
pub mod workspace;

use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use tower_http::cors::{Any, CorsLayer};

pub use api::AppState;
pub use error::ApiError;
pub use workspace::Workspace;

type Shared = State<Arc<AppState>>;
type RawQuery = Result<Query<Vec<(String, String)>>, QueryRejection>;

fn json_response(bytes: Arc<Vec<u8>>) -> Response {
    (
        StatusCode::OK,
        [(header::CONTENT_TYPE, "application/json")],
        bytes.as_ref().clone(),
    )
        .into_response()
}

async fn blocking<F>(f: F) -> Response
where
    F: FnOnce() -> Result<Arc<Vec<u8>>, ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(Ok(bytes)) => json_response(bytes),
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError::internal(format!("worker failed: {e}")).into_response(),
    }
}

fn pairs(q: RawQuery) -> Result<Vec<(String, String)>, ApiError> {
    q.map(|Query(p)| p).map_err(|e| ApiError::invalid(e.body_text()))
}

async fn healthz() -> Response {
    (
        StatusCode::OK,
        [(header::CONTENT_TYPE, "application/json")],
        "{\"status\":\"ok\"}",
    )
        .into_response()
}

async fn runs(State(st): Shared) -> Response {
    match st.runs_payload() {
        Ok(b) => json_response(Arc::new(b)),
        Err(e) => e.into_response(),
    }
}

macro_rules! query_endpoint {
    ($name:ident, $method:ident) => {
        async fn $name(State(st): Shared, Path(id): Path<String>, q: RawQuery) -> Response {
            match pairs(q) {
                Ok(p) => blocking(move || st.$method(&id, p)).await,
                Err(e) => e.into_response(),
            }
        }
    };
}

query_endpoint!(beam, beam);
query_endpoint!(pulse, pulse);
query_endpoint!(quality, quality);
query_endpoint!(tau_map, tau_map);

async fn optimize(State(st): Shared, Path(id): Path<String>, body: Bytes) -> Response {
    blocking(move || st.optimize(&id, &body)).await
}

async fn fallback() -> Response {
    ApiError::not_found("no such endpoint").into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    Router::new()
        .route("/healthz", get(healthz))
        .route("/runs", get(runs))
        .route("/runs/{id}/beam", get(beam))
        .route("/runs/{id}/pulse", get(pulse))
        .route("/runs/{id}/quality", get(quality))
        .route("/runs/{id}/tau-map", get(tau_map))
        .route("/runs/{id}/optimize", post(optimize))
        .fallback(fallback)
        .layer(cors)
        .with_state(state)
}

/// Serve on an already bound listener until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Resolves on SIGINT or, on Unix, SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    {
        let term = async {
            match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
                Ok(mut s) => {
                    s.recv().await;
                }
                Err(_) => std::future::pending::<()>().await,
            }
        };
        tokio::select! {
            _ = ctrl_c => {},
            _ = term => {},
        }
    }
    #[cfg(not(unix))]
    ctrl_c.await;
}
