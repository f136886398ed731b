//! HTTP facade over the ctrlbot engine.
//!
//! Chat is open; configuration, knowledge editing, trace inspection,
//! analytics and editor ratings require `Authorization: Bearer <token>` when a
//! token is configured. Every answered turn is appended to `traces.jsonl` and
//! every rating to `ratings.jsonl` in the data directory.

pub mod analytics;
mod error;
mod logs;
mod routes;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use ctrlbot_core::control::{ControlConfig, Engine, RoutingTrace, SessionStore, DEFAULT_MAX_IDLE};
use ctrlbot_core::generation::{RemoteBackend, RemoteConfig};
use ctrlbot_core::knowledge::KnowledgeBase;

pub use analytics::{summarize, AnalyticsSummary, Rater, RatingRecord, Verdict, VerdictCounts};
pub use error::ApiError;
pub use logs::JsonlLog;
pub use routes::router;

/// Environment variable holding the editor bearer token.
pub const TOKEN_ENV: &str = "CTRLBOT_TOKEN";
pub const TRACE_LOG: &str = "traces.jsonl";
pub const RATING_LOG: &str = "ratings.jsonl";
/// Edited knowledge base snapshot inside the data directory.
pub const KB_SNAPSHOT: &str = "kb";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub token: Option<String>,
    /// End-user ratings accepted per session within `rating_window`.
    pub end_user_ratings: usize,
    pub rating_window: chrono::Duration,
    pub max_idle: chrono::Duration,
    /// Artificial pause inside `/reindex`, used by tests to hold the lock.
    pub reindex_delay: Duration,
    /// Whether knowledge edits are written to `<data_dir>/kb`.
    pub persist_kb: bool,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            static_dir: None,
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            end_user_ratings: 3,
            rating_window: chrono::Duration::minutes(10),
            max_idle: DEFAULT_MAX_IDLE,
            reindex_delay: Duration::ZERO,
            persist_kb: true,
        }
    }
}

pub struct AppState {
    pub(crate) config: ServiceConfig,
    pub(crate) engine: RwLock<Option<Arc<Engine>>>,
    pub(crate) working_kb: Mutex<Option<KnowledgeBase>>,
    pub(crate) control: RwLock<ControlConfig>,
    pub(crate) sessions: SessionStore,
    pub(crate) traces: JsonlLog,
    pub(crate) ratings: JsonlLog,
    /// Highest logged turn id per session.
    pub(crate) turns: Mutex<BTreeMap<String, u64>>,
    pub(crate) end_user_recent: Mutex<BTreeMap<String, Vec<chrono::DateTime<chrono::Utc>>>>,
    pub(crate) reindexing: AtomicBool,
}

impl AppState {
    /// Opens the logs under `config.data_dir`. Without an engine every chat
    /// and editing request answers 503.
    pub fn new(config: ServiceConfig, engine: Option<Engine>) -> std::io::Result<Arc<Self>> {
        std::fs::create_dir_all(&config.data_dir)?;
        let traces = JsonlLog::open(config.data_dir.join(TRACE_LOG))?;
        let ratings = JsonlLog::open(config.data_dir.join(RATING_LOG))?;
        let mut turns: BTreeMap<String, u64> = BTreeMap::new();
        for t in traces.read_all::<RoutingTrace>()? {
            let max = turns.entry(t.session_id).or_default();
            *max = (*max).max(t.turn_id);
        }
        let working_kb = engine.as_ref().map(|e| (**e.kb()).clone());
        Ok(Arc::new(Self {
            config,
            engine: RwLock::new(engine.map(Arc::new)),
            working_kb: Mutex::new(working_kb),
            control: RwLock::new(ControlConfig::default()),
            sessions: SessionStore::new(),
            traces,
            ratings,
            turns: Mutex::new(turns),
            end_user_recent: Mutex::new(BTreeMap::new()),
            reindexing: AtomicBool::new(false),
        }))
    }

    pub fn engine(&self) -> Option<Arc<Engine>> {
        self.engine.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn control_config(&self) -> ControlConfig {
        self.control.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.sessions
    }
}

/// Engine over `kb`, with a remote backend registered when
/// `CTRLBOT_LLM_BASE_URL` is set. Builds a blocking HTTP client, so call it
/// outside async code.
pub fn build_engine(kb: KnowledgeBase) -> Engine {
    let mut engine = Engine::new(kb);
    if let Some(cfg) = RemoteConfig::from_env() {
        match RemoteBackend::new(cfg) {
            Ok(remote) => engine.backends_mut().register(Arc::new(remote)),
            Err(e) => tracing::warn!("remote backend not registered: {e}"),
        }
    }
    engine
}

/// The knowledge base to serve: the edited snapshot in `data_dir` if one
/// exists, otherwise `kb_dir`.
pub fn resolve_kb_dir(data_dir: &Path, kb_dir: Option<&Path>) -> Option<PathBuf> {
    let snapshot = data_dir.join(KB_SNAPSHOT);
    if snapshot.is_dir() {
        return Some(snapshot);
    }
    kb_dir.map(Path::to_path_buf)
}

/// Serves `router(state)` on `listener` until Ctrl-C, evicting idle sessions
/// once a minute.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    let sweeper = Arc::clone(&state);
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            let n = sweeper.sessions.expire_sessions(chrono::Utc::now(), sweeper.config.max_idle);
            if n > 0 {
                tracing::info!("evicted {n} idle sessions");
            }
        }
    });
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
