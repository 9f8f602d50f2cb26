//! One annotation session: an engine run on its own thread whose expert is
//! whoever answers through the HTTP API.

use std::collections::VecDeque;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::Duration;

use alca::cluster::{representatives, ClusterAssignment};
use alca::engine::{Event, EventSink, ExperimentConfig, IterationMetrics, ReplaySummary, Replayer, Run};
use alca::oracle::{Answer, ClusterQuery, DeferredExpert, PendingTask, TaskBoard};
use alca::{ClassId, ClusterDecision, Error, Expert, Result, SampleId};
use serde::{Deserialize, Serialize};

use crate::config::LoadedDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Running,
    Finished,
    Failed,
}

/// Members of every cluster of the latest clustering, centroid-nearest first.
#[derive(Debug, Clone)]
pub struct ClusterView {
    pub iteration: usize,
    pub clusters: Vec<Vec<SampleId>>,
}

#[derive(Debug)]
struct Shared {
    state: RunState,
    phase: &'static str,
    error: Option<String>,
    tracker: Replayer,
    history: Vec<IterationMetrics>,
    clusters: Option<Arc<ClusterView>>,
}

/// Consistent copy of a session's progress.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub state: RunState,
    pub phase: &'static str,
    pub error: Option<String>,
    pub counters: ReplaySummary,
    pub history: Vec<IterationMetrics>,
}

/// What `<id>.session.json` holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub dataset: String,
    pub config: ExperimentConfig,
}

pub struct Session {
    pub id: String,
    pub data: Arc<LoadedDataset>,
    pub config: ExperimentConfig,
    board: TaskBoard,
    shared: Arc<Mutex<Shared>>,
    worker: Mutex<Option<JoinHandle<()>>>,
    journal: PathBuf,
}

pub fn journal_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.jsonl"))
}

pub fn meta_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.session.json"))
}

/// Parses a journal file, one event per line.
pub fn read_journal(path: &Path) -> Result<Vec<Event>> {
    let file = File::open(path)?;
    let mut events = Vec::new();
    let mut offset = 0u64;
    for line in BufReader::new(file).lines() {
        let line = line?;
        let len = line.len() as u64 + 1;
        if !line.trim().is_empty() {
            let event = serde_json::from_str(&line).map_err(|e| Error::Format {
                offset,
                message: format!("journal line: {e}"),
            })?;
            events.push(event);
        }
        offset += len;
    }
    Ok(events)
}

impl Session {
    /// Starts a session. `prior` holds the journal of an earlier process; its
    /// answers are replayed before any new task is posted.
    pub fn start(
        meta: SessionMeta,
        data: Arc<LoadedDataset>,
        journal_dir: &Path,
        answer_timeout: Duration,
        prior: Vec<Event>,
    ) -> Result<Arc<Self>> {
        meta.config.validate()?;
        if meta.config.repeats != 1 {
            return Err(Error::Config("an annotation session runs exactly one repeat".into()));
        }
        fs::create_dir_all(journal_dir)?;
        let journal = journal_path(journal_dir, &meta.id);
        if prior.is_empty() {
            fs::write(
                meta_path(journal_dir, &meta.id),
                serde_json::to_vec_pretty(&meta).map_err(|e| Error::Config(e.to_string()))?,
            )?;
            File::create(&journal)?;
        }
        let tracker = Replayer::new(data.splits.train.iter().copied(), meta.config.count_skipped_clusters)?;
        let session = Arc::new(Self {
            id: meta.id,
            board: TaskBoard::new(data.dataset.num_classes()),
            data,
            config: meta.config,
            shared: Arc::new(Mutex::new(Shared {
                state: RunState::Running,
                phase: "starting",
                error: None,
                tracker,
                history: Vec::new(),
                clusters: None,
            })),
            worker: Mutex::new(None),
            journal,
        });
        let worker = {
            let session = Arc::clone(&session);
            std::thread::Builder::new()
                .name(format!("session-{}", session.id))
                .spawn(move || session.drive(prior, answer_timeout))?
        };
        *session.worker.lock().unwrap_or_else(|p| p.into_inner()) = Some(worker);
        Ok(session)
    }

    fn lock(&self) -> MutexGuard<'_, Shared> {
        self.shared.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn drive(&self, prior: Vec<Event>, answer_timeout: Duration) {
        let outcome = self.run_engine(prior, answer_timeout);
        let mut s = self.lock();
        match outcome {
            Ok(()) => {
                s.state = RunState::Finished;
                s.phase = "finished";
            }
            Err(e) => {
                s.state = RunState::Failed;
                s.phase = "failed";
                s.error = Some(e.to_string());
            }
        }
        drop(s);
        self.board.close();
    }

    fn run_engine(&self, prior: Vec<Event>, answer_timeout: Duration) -> Result<()> {
        let data = &self.data;
        let mut run = Run::with_default_model(&data.dataset, &data.splits, self.config.clone(), 0)?;
        let answers = prior.iter().filter_map(recorded_answer).collect();
        let mut expert = JournalExpert {
            recorded: answers,
            live: DeferredExpert::new(self.board.clone(), answer_timeout),
        };
        let mut sink = SessionSink {
            file: OpenOptions::new().append(true).open(&self.journal)?,
            expected: prior.into(),
            line: 0,
            shared: Arc::clone(&self.shared),
            data: Arc::clone(&self.data),
        };
        run.run_to_end(&mut expert, &mut sink)?;
        if !sink.expected.is_empty() {
            return Err(Error::InvariantViolation(format!(
                "journal holds {} events beyond the end of the run",
                sink.expected.len()
            )));
        }
        Ok(())
    }

    pub fn pending(&self) -> Option<PendingTask> {
        self.board.pending()
    }

    pub fn submit(&self, task_id: u64, answer: Answer) -> Result<()> {
        self.board.submit(task_id, answer)
    }

    pub fn snapshot(&self) -> Snapshot {
        let s = self.lock();
        Snapshot {
            state: s.state,
            phase: s.phase,
            error: s.error.clone(),
            counters: s.tracker.state().clone(),
            history: s.history.clone(),
        }
    }

    pub fn clusters(&self) -> Option<Arc<ClusterView>> {
        self.lock().clusters.clone()
    }

    pub fn journal(&self) -> &Path {
        &self.journal
    }

    /// Stops the engine (a blocked expert fails) and waits for its thread.
    pub fn shutdown(&self) {
        self.board.close();
        let handle = self.worker.lock().unwrap_or_else(|p| p.into_inner()).take();
        if let Some(h) = handle {
            let _ = h.join();
        }
    }

    /// Waits for the engine thread without stopping it.
    pub fn join(&self) {
        let handle = self.worker.lock().unwrap_or_else(|p| p.into_inner()).take();
        if let Some(h) = handle {
            let _ = h.join();
        }
    }
}

fn recorded_answer(event: &Event) -> Option<Answer> {
    match event {
        Event::SampleLabeled { class, .. } => Some(Answer::Class(*class)),
        Event::ClusterLabeled { class, .. } => Some(Answer::Cluster(ClusterDecision::Label(*class))),
        Event::ClusterSkipped { .. } => Some(Answer::Cluster(ClusterDecision::Skip)),
        _ => None,
    }
}

/// Answers from the journal first, then from the live board.
struct JournalExpert {
    recorded: VecDeque<Answer>,
    live: DeferredExpert,
}

impl Expert for JournalExpert {
    fn begin_iteration(&mut self, iteration: usize) {
        self.live.begin_iteration(iteration);
    }

    fn label_sample(&mut self, id: SampleId) -> Result<ClassId> {
        match self.recorded.pop_front() {
            None => self.live.label_sample(id),
            Some(Answer::Class(c)) => Ok(c),
            Some(other) => Err(diverged(format!("journal answer {other:?} for sample {id}"))),
        }
    }

    fn review_cluster(&mut self, query: &ClusterQuery) -> Result<ClusterDecision> {
        match self.recorded.pop_front() {
            None => self.live.review_cluster(query),
            Some(Answer::Cluster(d)) => Ok(d),
            Some(other) => Err(diverged(format!("journal answer {other:?} for cluster {}", query.cluster))),
        }
    }
}

fn diverged(message: String) -> Error {
    Error::InvariantViolation(format!("journal does not match the run: {message}"))
}

struct SessionSink {
    file: File,
    expected: VecDeque<Event>,
    line: usize,
    shared: Arc<Mutex<Shared>>,
    data: Arc<LoadedDataset>,
}

fn phase_after(event: &Event) -> &'static str {
    match event {
        Event::IterationStarted { .. } => "selecting",
        Event::SamplesSelected { .. } | Event::SampleLabeled { .. } => "labeling",
        Event::Clustered { .. } | Event::ClusterPresented { .. } => "clustering",
        Event::ClusterLabeled { .. } | Event::ClusterSkipped { .. } => "reviewing",
        Event::TrainingStarted { .. } => "training",
        Event::TrainingFinished { .. } => "evaluating",
        Event::IterationFinished { .. } | Event::ClusterLabelsReset { .. } => "between_iterations",
    }
}

impl EventSink for SessionSink {
    fn record(&mut self, event: Event) -> Result<()> {
        self.line += 1;
        match self.expected.pop_front() {
            Some(old) if old == event => {}
            Some(old) => {
                return Err(diverged(format!("line {}: journal has {old:?}, run produced {event:?}", self.line)));
            }
            None => {
                let mut line = serde_json::to_vec(&event).map_err(|e| Error::InvariantViolation(e.to_string()))?;
                line.push(b'\n');
                self.file.write_all(&line)?;
                self.file.flush()?;
            }
        }
        let mut s = self.shared.lock().unwrap_or_else(|p| p.into_inner());
        s.tracker.apply(&event)?;
        s.phase = phase_after(&event);
        if let Event::IterationFinished { metrics } = &event {
            s.history.push(metrics.clone());
        }
        Ok(())
    }

    fn clustering(&mut self, iteration: usize, assignment: &ClusterAssignment) {
        let features = self.data.dataset.features();
        let clusters = (0..assignment.k())
            .map(|c| {
                let size = assignment.members[c].len().max(1);
                representatives(assignment, features, c, size).unwrap_or_default()
            })
            .collect();
        self.shared.lock().unwrap_or_else(|p| p.into_inner()).clusters = Some(Arc::new(ClusterView { iteration, clusters }));
    }
}
