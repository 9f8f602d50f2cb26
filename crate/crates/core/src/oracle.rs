//! The expert who answers annotation queries.
//!
//! Two query shapes exist: label one sample, or review a cluster and either
//! label all of it or skip it. [`SimulatedExpert`] answers from ground truth.
//! [`DeferredExpert`] parks each query on a [`TaskBoard`] and blocks until
//! someone (typically an HTTP handler relaying a human) submits an answer.

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassId, GroundTruth, SampleId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterDecision {
    Label(ClassId),
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Minimum modal-class fraction for the simulated expert to label a cluster.
    pub consistency_threshold: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            consistency_threshold: 0.8,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        let t = self.consistency_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::config(format!(
                "oracle.consistency_threshold must be in (0, 1], got {t}"
            )));
        }
        Ok(())
    }
}

/// The simulated individual annotation: always the true label.
pub fn annotate_individual(truth: &GroundTruth, id: SampleId) -> ClassId {
    truth.label(id)
}

/// Most frequent class and its count; ties go to the smallest class.
pub fn modal_class(labels: &[ClassId]) -> Option<(ClassId, usize)> {
    let mut counts = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .fold(None, |best, (class, n)| match best {
            Some((_, bn)) if bn >= n => best,
            _ => Some((class, n)),
        })
}

/// Labels the cluster with its modal class when that class makes up at least
/// `consistency_threshold` of the members.
pub fn annotate_cluster(member_labels: &[ClassId], config: &OracleConfig) -> Result<ClusterDecision> {
    let (class, count) =
        modal_class(member_labels).ok_or_else(|| Error::validation("cannot review an empty cluster"))?;
    let purity = count as f64 / member_labels.len() as f64;
    Ok(if purity >= config.consistency_threshold {
        ClusterDecision::Label(class)
    } else {
        ClusterDecision::Skip
    })
}

/// A cluster as shown to the expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuery {
    pub iteration: usize,
    pub cluster: usize,
    /// Every member id, ascending.
    pub members: Vec<SampleId>,
    /// Centroid-nearest members, nearest first.
    pub representatives: Vec<SampleId>,
}

pub trait Expert {
    /// Called by the engine before any query of `iteration`.
    fn begin_iteration(&mut self, _iteration: usize) {}
    fn label_sample(&mut self, id: SampleId) -> Result<ClassId>;
    fn review_cluster(&mut self, query: &ClusterQuery) -> Result<ClusterDecision>;
}

/// Answers from ground truth: exact individual labels, threshold rule for clusters.
#[derive(Debug, Clone, Copy)]
pub struct SimulatedExpert<'a> {
    truth: &'a GroundTruth,
    config: OracleConfig,
}

impl<'a> SimulatedExpert<'a> {
    pub fn new(truth: &'a GroundTruth, config: OracleConfig) -> Self {
        Self { truth, config }
    }
}

impl Expert for SimulatedExpert<'_> {
    fn label_sample(&mut self, id: SampleId) -> Result<ClassId> {
        Ok(annotate_individual(self.truth, id))
    }

    fn review_cluster(&mut self, query: &ClusterQuery) -> Result<ClusterDecision> {
        let labels: Vec<ClassId> = query.members.iter().map(|&id| self.truth.label(id)).collect();
        annotate_cluster(&labels, &self.config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    SampleLabel { iteration: usize, sample: SampleId },
    ClusterReview(ClusterQuery),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Class(ClassId),
    Cluster(ClusterDecision),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendingTask {
    pub id: u64,
    pub task: Task,
}

#[derive(Debug)]
struct BoardState {
    num_classes: usize,
    next_id: u64,
    pending: Option<PendingTask>,
    answer: Option<(u64, Answer)>,
    closed: bool,
}

/// Rendezvous between a blocked [`DeferredExpert`] and whoever answers its tasks.
///
/// At most one task is pending. Answers must carry the pending task id; an
/// answer for any other id is a [`Error::Conflict`] and changes nothing.
#[derive(Debug, Clone)]
pub struct TaskBoard {
    inner: Arc<(Mutex<BoardState>, Condvar)>,
}

impl TaskBoard {
    pub fn new(num_classes: usize) -> Self {
        Self {
            inner: Arc::new((
                Mutex::new(BoardState {
                    num_classes,
                    next_id: 1,
                    pending: None,
                    answer: None,
                    closed: false,
                }),
                Condvar::new(),
            )),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BoardState> {
        self.inner.0.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn pending(&self) -> Option<PendingTask> {
        self.lock().pending.clone()
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }

    /// Resolves the pending task.
    pub fn submit(&self, task_id: u64, answer: Answer) -> Result<()> {
        let mut st = self.lock();
        if st.closed {
            return Err(Error::Expert("task board is closed".into()));
        }
        let Some(pending) = &st.pending else {
            return Err(Error::Conflict(format!("task {task_id} is not pending")));
        };
        if pending.id != task_id {
            return Err(Error::Conflict(format!(
                "task {task_id} is not pending (current task is {})",
                pending.id
            )));
        }
        let class = match (&pending.task, answer) {
            (Task::SampleLabel { .. }, Answer::Class(c)) => Some(c),
            (Task::ClusterReview(_), Answer::Cluster(ClusterDecision::Label(c))) => Some(c),
            (Task::ClusterReview(_), Answer::Cluster(ClusterDecision::Skip)) => None,
            _ => return Err(Error::validation("answer kind does not match the pending task")),
        };
        if let Some(c) = class {
            if c >= st.num_classes {
                return Err(Error::validation(format!(
                    "class {c} is outside [0, {})",
                    st.num_classes
                )));
            }
        }
        st.pending = None;
        st.answer = Some((task_id, answer));
        self.inner.1.notify_all();
        Ok(())
    }

    /// Wakes any blocked expert with an error; further submissions fail.
    pub fn close(&self) {
        self.lock().closed = true;
        self.inner.1.notify_all();
    }

    fn ask(&self, task: Task, timeout: Duration) -> Result<Answer> {
        let deadline = Instant::now() + timeout;
        let mut st = self.lock();
        if st.closed {
            return Err(Error::Expert("task board is closed".into()));
        }
        let id = st.next_id;
        st.next_id += 1;
        st.pending = Some(PendingTask { id, task });
        st.answer = None;
        self.inner.1.notify_all();
        loop {
            if let Some((aid, answer)) = st.answer {
                if aid == id {
                    st.answer = None;
                    return Ok(answer);
                }
            }
            if st.closed {
                st.pending = None;
                return Err(Error::Expert("task board closed while waiting for an answer".into()));
            }
            let now = Instant::now();
            if now >= deadline {
                st.pending = None;
                return Err(Error::Expert(format!("no answer to task {id} within {timeout:?}")));
            }
            st = self
                .inner
                .1
                .wait_timeout(st, deadline - now)
                .unwrap_or_else(|p| p.into_inner())
                .0;
        }
    }
}

/// Expert whose answers arrive asynchronously through a [`TaskBoard`].
#[derive(Debug, Clone)]
pub struct DeferredExpert {
    board: TaskBoard,
    timeout: Duration,
    iteration: usize,
}

impl DeferredExpert {
    pub fn new(board: TaskBoard, timeout: Duration) -> Self {
        Self {
            board,
            timeout,
            iteration: 0,
        }
    }
}

impl Expert for DeferredExpert {
    fn begin_iteration(&mut self, iteration: usize) {
        self.iteration = iteration;
    }

    fn label_sample(&mut self, id: SampleId) -> Result<ClassId> {
        let task = Task::SampleLabel {
            iteration: self.iteration,
            sample: id,
        };
        match self.board.ask(task, self.timeout)? {
            Answer::Class(c) => Ok(c),
            Answer::Cluster(_) => unreachable!("board validates answer kinds"),
        }
    }

    fn review_cluster(&mut self, query: &ClusterQuery) -> Result<ClusterDecision> {
        self.iteration = query.iteration;
        match self.board.ask(Task::ClusterReview(query.clone()), self.timeout)? {
            Answer::Cluster(d) => Ok(d),
            Answer::Class(_) => unreachable!("board validates answer kinds"),
        }
    }
}
