//! REST front end for the modal-choice model.
//!
//! Populations (uploaded or synthesized) and policy games live in memory.
//! When a snapshot directory is configured, populations are written there on
//! shutdown and reloaded lazily on first access.

pub mod error;
pub mod handlers;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use tower_http::cors::CorsLayer;

pub use error::ApiError;
pub use store::SessionStore;

/// Uploads larger than this are rejected with 413.
pub const MAX_BODY_BYTES: usize = 50 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub snapshot_dir: Option<PathBuf>,
    /// Allow cross-origin requests from any origin.
    pub cors: bool,
    /// Largest population the synthesis endpoint will build.
    pub max_synth: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { snapshot_dir: None, cors: false, max_synth: 1_000_000 }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
    pub config: Arc<ServiceConfig>,
    /// Serializes keyed creations so a retried request cannot race its original.
    pub(crate) idempotency_gate: Arc<tokio::sync::Mutex<()>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        AppState {
            store: Arc::new(SessionStore::new(config.snapshot_dir.clone())),
            config: Arc::new(config),
            idempotency_gate: Arc::default(),
        }
    }
}

pub fn router(state: AppState) -> Router {
    use handlers::*;
    let cors = state.config.cors;
    let app = Router::new()
        .route("/health", get(health))
        .route("/populations", post(create_population))
        .route("/populations/{id}", get(get_population).delete(delete_population))
        .route("/populations/{id}/stats/{kind}", get(get_stats))
        .route("/populations/{id}/rationality", get(get_rationality))
        .route("/populations/{id}/halo-rescue", get(get_halo_rescue))
        .route("/populations/{id}/crowd-medians", get(get_crowd_medians))
        .route("/populations/{id}/scenarios", post(post_scenario))
        .route("/games", post(create_game))
        .route("/games/{id}", get(get_game).delete(delete_game))
        .route("/games/{id}/turns", post(post_turn))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state);
    if cors {
        app.layer(CorsLayer::permissive())
    } else {
        app
    }
}

/// Serve until ctrl-c, then snapshot populations if a directory is set.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::new(config);
    let store = state.store.clone();
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        })
        .await?;
    let n = tokio::task::spawn_blocking(move || store.snapshot_all())
        .await
        .map_err(std::io::Error::other)??;
    if n > 0 {
        log::info!("snapshotted {n} populations");
    }
    Ok(())
}
