//! Local HTTP API over a campaign store.
//!
//! Every route lives under `/api/v1`. Document bodies use the canonical
//! serialization, so bytes fetched here match files written by the command
//! line tool. Automated execution streams protocols as server-sent events.

mod error;
mod routes;

use std::collections::HashSet;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::Router;
use iotsam_core::{CampaignStore, Clock, ExecutorRegistry, HarnessOptions, SystemClock};

pub use error::{status_for, ApiError};
pub use routes::{PendingManual, SessionSummary};

/// Address `serve` binds when none is configured.
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8660";

/// Shared state behind every handler.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    store: CampaignStore,
    registry: ExecutorRegistry,
    options: HarnessOptions,
    clock: Arc<dyn Clock>,
    /// Sessions with an execute-automated run in flight.
    running: Mutex<HashSet<String>>,
}

impl AppState {
    pub fn new(store: CampaignStore, registry: ExecutorRegistry) -> Self {
        Self::with_options(store, registry, HarnessOptions::default())
    }

    pub fn with_options(store: CampaignStore, registry: ExecutorRegistry, options: HarnessOptions) -> Self {
        Self {
            inner: Arc::new(Inner {
                store,
                registry,
                options,
                clock: Arc::new(SystemClock),
                running: Mutex::new(HashSet::new()),
            }),
        }
    }

    pub fn store(&self) -> &CampaignStore {
        &self.inner.store
    }

    /// Marks `session_id` as executing; false if a run is already active.
    fn claim(&self, session_id: &str) -> bool {
        self.inner.running.lock().expect("poisoned").insert(session_id.to_string())
    }

    fn release(&self, session_id: &str) {
        self.inner.running.lock().expect("poisoned").remove(session_id);
    }
}

pub fn router(state: AppState) -> Router {
    Router::new().nest("/api/v1", routes::api()).with_state(state)
}

/// Serves the API on `listener` until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    tracing::info!(?addr, "listening");
    axum::serve(listener, router(state)).await
}
