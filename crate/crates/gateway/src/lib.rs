//! REST service over the drafting pipeline.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/api/v1/sow` | submit a requirement, 202 with `sow_id` |
//! | GET | `/api/v1/sow/{id}` | run status, draft and reports |
//! | POST | `/api/v1/sow/{id}/feedback` | rate a section or the whole draft |
//! | GET | `/api/v1/clauses/search` | `q`, `k`, `min_score` |
//! | POST | `/api/v1/corpus/ingest` | JSON path list, inline documents, or multipart files |
//! | POST | `/api/v1/ablate` | run with modules disabled |
//! | GET | `/healthz` | liveness |

mod error;
mod handlers;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sowgen_core::orchestrator::FeedbackBook;
use sowgen_core::{AppConfig, ClauseStore, Orchestrator, PipelineRun, RunStatus, SharedStore, SystemClock};
use tower_http::cors::CorsLayer;

pub use error::ApiError;
pub use handlers::{
    AblateRequest, AblateResponse, FeedbackBody, IngestRequest, SearchResult, SowCreated, SowResource, SowStatus,
};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error(transparent)]
    Config(#[from] sowgen_core::orchestrator::ConfigError),
    #[error(transparent)]
    Backend(#[from] sowgen_core::BackendError),
    #[error(transparent)]
    Store(#[from] sowgen_core::vecstore::VecStoreError),
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

/// A run as kept in the registry and persisted under `runs/`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunEntry {
    pub sow_id: String,
    pub status: SowStatus,
    pub run: Option<PipelineRun>,
}

/// Shared service state: the orchestrator, the clause store, the run
/// registry and the feedback book.
pub struct AppState {
    pub orchestrator: Orchestrator,
    pub store: SharedStore,
    pub(crate) runs: Mutex<HashMap<String, RunEntry>>,
    pub(crate) feedback: Mutex<FeedbackBook>,
    pub(crate) data_dir: PathBuf,
    pub(crate) index_path: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GatewayError + '_ {
    move |source| GatewayError::Io { path: path.to_path_buf(), source }
}

impl AppState {
    /// State over an existing orchestrator and store; previously persisted
    /// runs and feedback under `data_dir` are loaded.
    pub fn new(
        orchestrator: Orchestrator,
        store: ClauseStore,
        data_dir: impl Into<PathBuf>,
        index_path: impl Into<PathBuf>,
    ) -> Result<Self, GatewayError> {
        let data_dir = data_dir.into();
        let runs_dir = data_dir.join("runs");
        std::fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;
        let mut runs = HashMap::new();
        for entry in std::fs::read_dir(&runs_dir).map_err(io_err(&runs_dir))? {
            let path = entry.map_err(io_err(&runs_dir))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
                match serde_json::from_str::<RunEntry>(&text) {
                    Ok(e) if e.run.is_some() => {
                        runs.insert(e.sow_id.clone(), e);
                    }
                    _ => tracing::warn!(path = %path.display(), "skipping unreadable run record"),
                }
            }
        }
        let feedback_path = data_dir.join("feedback.json");
        let feedback = if feedback_path.exists() {
            let text = std::fs::read_to_string(&feedback_path).map_err(io_err(&feedback_path))?;
            serde_json::from_str(&text).unwrap_or_default()
        } else {
            FeedbackBook::default()
        };
        Ok(Self {
            orchestrator,
            store: SharedStore::new(store),
            runs: Mutex::new(runs),
            feedback: Mutex::new(feedback),
            data_dir,
            index_path: index_path.into(),
        })
    }

    /// State built from a configuration file's settings, using the system
    /// clock. The clause index is loaded if it exists.
    pub fn from_config(config: &AppConfig) -> Result<Self, GatewayError> {
        let backends = config.backends()?;
        let orchestrator =
            Orchestrator::with_template(config.pipeline.clone(), backends, Arc::new(SystemClock), config.template()?)?
                .with_lexicon(config.lexicon()?);
        let index = config.index_path();
        let store = if index.exists() {
            let mut s = ClauseStore::load(&index, config.pipeline.embedding_dim)?;
            s.set_feedback_alpha(config.pipeline.feedback_alpha);
            s
        } else {
            ClauseStore::new(config.pipeline.embedding_dim).with_feedback_alpha(config.pipeline.feedback_alpha)
        };
        Self::new(orchestrator, store, config.data_dir(), index)
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn run_entry(&self, sow_id: &str) -> Option<RunEntry> {
        self.runs.lock().get(sow_id).cloned()
    }

    pub(crate) fn set_run(&self, sow_id: &str, entry: RunEntry) {
        self.runs.lock().insert(sow_id.to_string(), entry);
    }

    fn persist_run(&self, sow_id: &str, entry: &RunEntry) -> Result<(), GatewayError> {
        let path = self.data_dir.join("runs").join(format!("{}.json", file_safe(sow_id)));
        let json = serde_json::to_string_pretty(entry).expect("run serializes");
        write_atomic(&path, json.as_bytes())
    }

    pub(crate) fn persist_feedback(&self, book: &FeedbackBook) -> Result<(), GatewayError> {
        let json = serde_json::to_string_pretty(book).expect("feedback serializes");
        write_atomic(&self.data_dir.join("feedback.json"), json.as_bytes())
    }

    pub(crate) fn finish_run(&self, run: PipelineRun) {
        let status = match run.status {
            RunStatus::Complete => SowStatus::Complete,
            RunStatus::Failed => SowStatus::Failed,
        };
        let sow_id = run.sow_id.clone();
        let entry = RunEntry { sow_id: sow_id.clone(), status, run: Some(run) };
        if let Err(e) = self.persist_run(&sow_id, &entry) {
            tracing::error!(%sow_id, error = %e, "could not persist run");
        }
        self.set_run(&sow_id, entry);
    }
}

fn file_safe(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), GatewayError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/api/v1/sow", post(handlers::create_sow))
        .route("/api/v1/sow/{id}", get(handlers::get_sow))
        .route("/api/v1/sow/{id}/feedback", post(handlers::post_feedback))
        .route("/api/v1/clauses/search", get(handlers::search_clauses))
        .route("/api/v1/corpus/ingest", post(handlers::ingest))
        .route("/api/v1/ablate", post(handlers::ablate))
        .fallback(|| async { ApiError::new(axum::http::StatusCode::NOT_FOUND, "NOT_FOUND", "no such route") })
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serve until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).await
}
