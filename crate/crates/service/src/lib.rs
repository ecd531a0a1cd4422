//! HTTP API over the enrichment planning engine.
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/api/v1/designs` | parameter document (JSON) |
//! | POST | `/api/v1/performance` | parameter document (JSON) |
//! | POST | `/api/v1/ingest` | participant CSV text |
//! | GET | `/api/v1/export/{job}/{table}` | |
//! | GET | `/api/v1/health` | |
//!
//! Finished jobs are cached under a content hash of the resolved parameters,
//! so repeating a request returns the same bytes. Computations run on a
//! bounded pool of blocking threads, stop at the configured time limit, and
//! are cancelled when the client disconnects.

mod api;
mod cache;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::routing::{get, post};
use axum::Router;
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;

pub use api::{DesignsResponse, ErrorBody, Health, PerformanceResponse};
use cache::LruCache;

/// Service settings, settable by flag or environment variable.
#[derive(Debug, Clone, clap::Args)]
pub struct ServiceConfig {
    /// Address to listen on.
    #[arg(long, env = "ENRICH_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Maximum number of computations running at once.
    #[arg(long, env = "ENRICH_WORKERS", default_value_t = default_workers())]
    pub workers: usize,
    /// Upper bound on any request's time limit, in seconds.
    #[arg(long, env = "ENRICH_MAX_TIME_LIMIT", default_value_t = 90.0)]
    pub max_time_limit_secs: f64,
    /// Number of finished jobs kept for export.
    #[arg(long, env = "ENRICH_CACHE_SIZE", default_value_t = 64)]
    pub cache_size: usize,
    /// Largest accepted `calibration_paths`; bounds memory per request.
    #[arg(long, env = "ENRICH_MAX_CALIBRATION_PATHS", default_value_t = 2_000_000)]
    pub max_calibration_paths: usize,
    /// Directory of static files served at `/` (the browser UI).
    #[arg(long, env = "ENRICH_STATIC_DIR")]
    pub static_dir: Option<PathBuf>,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(2, |n| n.get().clamp(1, 4))
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            workers: default_workers(),
            max_time_limit_secs: 90.0,
            cache_size: 64,
            max_calibration_paths: 2_000_000,
            static_dir: None,
        }
    }
}

pub(crate) struct AppState {
    config: ServiceConfig,
    cache: Mutex<LruCache<api::Job>>,
    permits: Arc<Semaphore>,
}

pub fn router(config: ServiceConfig) -> Router {
    let state = Arc::new(AppState {
        cache: Mutex::new(LruCache::new(config.cache_size)),
        permits: Arc::new(Semaphore::new(config.workers.max(1))),
        config,
    });
    let static_dir = state.config.static_dir.clone();
    let api = Router::new()
        .route("/api/v1/designs", post(api::designs))
        .route("/api/v1/performance", post(api::performance))
        .route("/api/v1/ingest", post(api::ingest))
        .route("/api/v1/export/{job}/{table}", get(api::export))
        .route("/api/v1/health", get(api::health))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds the configured address and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    tracing::info!(address = %listener.local_addr()?, workers = config.workers, "listening");
    axum::serve(listener, router(config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
