//! HTTP handlers. Every body is JSON; errors are `{"code", "message"}`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use alca::engine::{ExperimentConfig, IterationMetrics};
use alca::oracle::{Answer, Task};
use alca::{ClusterDecision, Error, SampleId};
use serde::{Deserialize, Serialize};

use crate::session::{RunState, Session, Snapshot};
use crate::AppState;

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Validation(_) => Self::invalid(e.to_string()),
            Error::Conflict(_) => Self::conflict(e.to_string()),
            Error::Expert(_) => Self::conflict(format!("session is no longer accepting answers: {e}")),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// Dataset name; may be omitted when the server has exactly one.
    #[serde(default)]
    pub dataset: Option<String>,
    #[serde(default)]
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub id: String,
    pub status: String,
    pub dataset: String,
    pub class_names: Vec<String>,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub has_thumbnails: bool,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDescriptor {
    pub sample: SampleId,
    pub thumbnail: Option<String>,
    /// Position on the dataset's top two principal axes.
    pub projection: [f32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskView {
    ClusterReview {
        id: u64,
        iteration: usize,
        cluster: usize,
        size: usize,
        shown: usize,
        representatives: Vec<SampleDescriptor>,
    },
    SampleLabel {
        id: u64,
        iteration: usize,
        sample: SampleDescriptor,
    },
}

impl TaskView {
    pub fn id(&self) -> u64 {
        match self {
            Self::ClusterReview { id, .. } | Self::SampleLabel { id, .. } => *id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TaskResponse {
    AwaitingAnswer {
        task: TaskView,
    },
    Training {
        phase: String,
        retry_after_ms: u64,
        completed_iterations: usize,
        last_metrics: Option<IterationMetrics>,
    },
    Finished {
        completed_iterations: usize,
        final_metrics: Option<IterationMetrics>,
    },
    Failed {
        message: String,
    },
}

/// Body of an answer. `label` is used for both task kinds; `skip` only for clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnswerBody {
    Label { class: usize },
    Skip,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerAck {
    pub accepted: u64,
    pub retry_after_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub interactions: u64,
    pub samples_labeled: u64,
    pub clusters_labeled: u64,
    pub clusters_skipped: u64,
    pub unlabeled: usize,
    pub labeled: usize,
    pub cluster_labeled: usize,
    pub iterations_finished: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsResponse {
    pub id: String,
    pub status: RunState,
    pub series: Vec<IterationMetrics>,
    pub counters: Counters,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PageQuery {
    #[serde(default)]
    pub page: usize,
    #[serde(default)]
    pub page_size: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MembersPage {
    pub cluster: usize,
    pub iteration: usize,
    pub size: usize,
    pub page: usize,
    pub page_size: usize,
    pub pages: usize,
    pub members: Vec<SampleDescriptor>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/task", get(next_task))
        .route("/sessions/{id}/task/{task_id}/answer", post(submit_answer))
        .route("/sessions/{id}/metrics", get(session_metrics))
        .route("/sessions/{id}/clusters/{cid}/members", get(cluster_members))
        .fallback(|| async { ApiError::not_found("no such route") })
        .with_state(state)
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ready" }))
}

fn session(state: &AppState, id: &str) -> ApiResult<Arc<Session>> {
    state.session(id).ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: CreateSession =
        serde_json::from_slice(&body).map_err(|e| ApiError::invalid(format!("request body: {e}")))?;
    let state2 = Arc::clone(&state);
    let session = tokio::task::spawn_blocking(move || state2.create_session(req.dataset.as_deref(), req.config))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let descriptor = describe_session(&session);
    Ok((StatusCode::CREATED, Json(descriptor)).into_response())
}

fn status_word(session: &Session, snap: &Snapshot) -> &'static str {
    match snap.state {
        RunState::Finished => "finished",
        RunState::Failed => "failed",
        RunState::Running if session.pending().is_some() => "awaiting_answer",
        RunState::Running => "training",
    }
}

pub fn describe_session(session: &Session) -> SessionDescriptor {
    let data = &session.data;
    let snap = session.snapshot();
    SessionDescriptor {
        id: session.id.clone(),
        status: status_word(session, &snap).into(),
        dataset: data.name.clone(),
        class_names: data.class_names.clone(),
        num_classes: data.dataset.num_classes(),
        feature_dim: data.dataset.feature_dim(),
        train_size: data.splits.train.len(),
        test_size: data.splits.test.len(),
        has_thumbnails: data.dataset.features().has_thumbnails(),
        config: session.config.clone(),
    }
}

fn descriptor(session: &Session, id: SampleId) -> SampleDescriptor {
    let data = &session.data;
    SampleDescriptor {
        sample: id,
        thumbnail: data.dataset.features().thumbnail(id).map(str::to_owned),
        projection: data.projection[id],
    }
}

async fn next_task(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = session(&state, &id)?;
    let snap = session.snapshot();
    let pending = session.pending();
    let body = match (snap.state, pending) {
        (RunState::Failed, _) => TaskResponse::Failed {
            message: snap.error.unwrap_or_default(),
        },
        (RunState::Finished, _) => TaskResponse::Finished {
            completed_iterations: snap.history.len(),
            final_metrics: snap.history.last().cloned(),
        },
        (RunState::Running, Some(p)) => TaskResponse::AwaitingAnswer {
            task: match p.task {
                Task::ClusterReview(q) => TaskView::ClusterReview {
                    id: p.id,
                    iteration: q.iteration,
                    cluster: q.cluster,
                    size: q.members.len(),
                    shown: q.representatives.len(),
                    representatives: q.representatives.iter().map(|&s| descriptor(&session, s)).collect(),
                },
                Task::SampleLabel { iteration, sample } => TaskView::SampleLabel {
                    id: p.id,
                    iteration,
                    sample: descriptor(&session, sample),
                },
            },
        },
        (RunState::Running, None) => TaskResponse::Training {
            phase: snap.phase.into(),
            retry_after_ms: state.options.retry_after.as_millis() as u64,
            completed_iterations: snap.history.len(),
            last_metrics: snap.history.last().cloned(),
        },
    };
    let mut response = Json(&body).into_response();
    if matches!(body, TaskResponse::Training { .. }) {
        let secs = state.options.retry_after.as_secs_f64().ceil().max(1.0) as u64;
        response
            .headers_mut()
            .insert(header::RETRY_AFTER, HeaderValue::from(secs));
    }
    Ok(response)
}

async fn submit_answer(
    State(state): State<Arc<AppState>>,
    Path((id, task_id)): Path<(String, u64)>,
    body: Bytes,
) -> ApiResult<Json<AnswerAck>> {
    let session = session(&state, &id)?;
    let answer: AnswerBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::invalid(format!("answer body: {e}")))?;
    let pending = session.pending();
    let answer = match (answer, pending.as_ref().map(|p| &p.task)) {
        // The board reports stale ids; only shape the answer when the id is current.
        (AnswerBody::Label { class }, Some(Task::SampleLabel { .. })) => Answer::Class(class),
        (AnswerBody::Label { class }, _) => Answer::Cluster(ClusterDecision::Label(class)),
        (AnswerBody::Skip, Some(Task::SampleLabel { .. })) if pending.as_ref().is_some_and(|p| p.id == task_id) => {
            return Err(ApiError::invalid("a sample-label task cannot be skipped"));
        }
        (AnswerBody::Skip, _) => Answer::Cluster(ClusterDecision::Skip),
    };
    session.submit(task_id, answer)?;
    Ok(Json(AnswerAck {
        accepted: task_id,
        retry_after_ms: state.options.retry_after.as_millis() as u64,
    }))
}

async fn session_metrics(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<MetricsResponse>> {
    let session = session(&state, &id)?;
    let snap = session.snapshot();
    let c = &snap.counters;
    Ok(Json(MetricsResponse {
        id,
        status: snap.state,
        counters: Counters {
            interactions: c.interactions,
            samples_labeled: c.samples_labeled,
            clusters_labeled: c.clusters_labeled,
            clusters_skipped: c.clusters_skipped,
            unlabeled: c.pool.unlabeled().len(),
            labeled: c.pool.labeled().len(),
            cluster_labeled: c.pool.cluster_labeled().len(),
            iterations_finished: c.iterations_finished,
        },
        series: snap.history,
    }))
}

async fn cluster_members(
    State(state): State<Arc<AppState>>,
    Path((id, cid)): Path<(String, usize)>,
    Query(q): Query<PageQuery>,
) -> ApiResult<Json<MembersPage>> {
    let session = session(&state, &id)?;
    let view = session
        .clusters()
        .ok_or_else(|| ApiError::not_found("no clustering has run in this session yet"))?;
    let members = view
        .clusters
        .get(cid)
        .ok_or_else(|| ApiError::not_found(format!("cluster {cid} does not exist (k = {})", view.clusters.len())))?;
    let page_size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
    if page_size == 0 || page_size > MAX_PAGE_SIZE {
        return Err(ApiError::invalid(format!("page_size must be in 1..={MAX_PAGE_SIZE}")));
    }
    let pages = members.len().div_ceil(page_size);
    let start = q.page.saturating_mul(page_size).min(members.len());
    let end = (start + page_size).min(members.len());
    Ok(Json(MembersPage {
        cluster: cid,
        iteration: view.iteration,
        size: members.len(),
        page: q.page,
        page_size,
        pages,
        members: members[start..end].iter().map(|&s| descriptor(&session, s)).collect(),
    }))
}
