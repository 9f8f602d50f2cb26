//! HTTP service that lets a human expert stand in for the simulated oracle.
//!
//! Each session runs one engine repeat on a dedicated thread. Whenever the
//! engine needs an answer it parks a task; clients poll
//! `GET /sessions/{id}/task` and resolve it with
//! `POST /sessions/{id}/task/{task_id}/answer`. Every engine event is
//! appended to `<journal_dir>/<id>.jsonl`, and a restarted server can resume
//! sessions by replaying their journals.

mod api;
mod config;
mod projection;
mod session;

use std::collections::HashMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Duration;

pub use api::{
    describe_session, router, AnswerAck, AnswerBody, ApiError, Counters, CreateSession, MembersPage, MetricsResponse,
    SampleDescriptor, SessionDescriptor, TaskResponse, TaskView,
};
pub use config::{DatasetSource, LoadedDataset, ServeConfig};
pub use projection::project_2d;
pub use session::{journal_path, meta_path, read_journal, ClusterView, RunState, Session, SessionMeta, Snapshot};

use alca::engine::ExperimentConfig;
use alca::{Error, Result};

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub journal_dir: PathBuf,
    pub answer_timeout: Duration,
    pub retry_after: Duration,
}

impl ServerOptions {
    pub fn from_config(config: &ServeConfig) -> Self {
        Self {
            journal_dir: config.journal_dir.clone(),
            answer_timeout: config.answer_timeout(),
            retry_after: Duration::from_millis(config.retry_after_ms),
        }
    }
}

pub struct AppState {
    pub options: ServerOptions,
    datasets: HashMap<String, Arc<LoadedDataset>>,
    default_dataset: Option<String>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl AppState {
    pub fn new(datasets: Vec<LoadedDataset>, options: ServerOptions) -> Result<Self> {
        if datasets.is_empty() {
            return Err(Error::Config("at least one dataset is required".into()));
        }
        let default_dataset = (datasets.len() == 1).then(|| datasets[0].name.clone());
        let mut map = HashMap::new();
        for d in datasets {
            let name = d.name.clone();
            if map.insert(name.clone(), Arc::new(d)).is_some() {
                return Err(Error::Config(format!("dataset name {name} is used twice")));
            }
        }
        std::fs::create_dir_all(&options.journal_dir)?;
        Ok(Self {
            options,
            datasets: map,
            default_dataset,
            sessions: RwLock::new(HashMap::new()),
        })
    }

    fn dataset(&self, name: Option<&str>) -> Result<Arc<LoadedDataset>> {
        let name = match (name, &self.default_dataset) {
            (Some(n), _) => n,
            (None, Some(d)) => d.as_str(),
            (None, None) => return Err(Error::Config("several datasets are loaded; name one".into())),
        };
        self.datasets
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("no dataset named {name}")))
    }

    pub fn session(&self, id: &str) -> Option<Arc<Session>> {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).get(id).cloned()
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().unwrap_or_else(|p| p.into_inner()).keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn create_session(&self, dataset: Option<&str>, config: ExperimentConfig) -> Result<Arc<Session>> {
        let data = self.dataset(dataset)?;
        let meta = SessionMeta {
            id: uuid::Uuid::new_v4().simple().to_string(),
            dataset: data.name.clone(),
            config,
        };
        let session = Session::start(meta, data, &self.options.journal_dir, self.options.answer_timeout, Vec::new())?;
        self.insert(session.clone());
        Ok(session)
    }

    fn insert(&self, session: Arc<Session>) {
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(session.id.clone(), session);
    }

    /// Restarts every session found in the journal directory by replaying
    /// its recorded answers. Returns the number resumed.
    pub fn resume(&self) -> Result<usize> {
        let mut metas = Vec::new();
        for entry in std::fs::read_dir(&self.options.journal_dir)? {
            let path = entry?.path();
            if path.to_string_lossy().ends_with(".session.json") {
                metas.push(path);
            }
        }
        metas.sort();
        let mut resumed = 0;
        for path in metas {
            let meta: SessionMeta = serde_json::from_slice(&std::fs::read(&path)?)
                .map_err(|e| Error::Format { offset: 0, message: format!("{}: {e}", path.display()) })?;
            if self.session(&meta.id).is_some() {
                continue;
            }
            let data = self.dataset(Some(&meta.dataset))?;
            let events = read_journal(&journal_path(&self.options.journal_dir, &meta.id))?;
            let session = Session::start(meta, data, &self.options.journal_dir, self.options.answer_timeout, events)?;
            self.insert(session);
            resumed += 1;
        }
        Ok(resumed)
    }

    /// Stops every session's engine thread.
    pub fn shutdown(&self) {
        let sessions: Vec<Arc<Session>> =
            self.sessions.read().unwrap_or_else(|p| p.into_inner()).values().cloned().collect();
        for s in sessions {
            s.shutdown();
        }
    }
}

/// Serves until `shutdown` resolves, then stops all sessions.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(Arc::clone(&state));
    let result = axum::serve(listener, app).with_graceful_shutdown(shutdown).await;
    tokio::task::spawn_blocking(move || state.shutdown()).await.ok();
    result
}
