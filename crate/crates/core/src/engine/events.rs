//! Structured event log.
//!
//! Every selection, presentation, decision and pool move is emitted as an
//! [`Event`]. The log alone is enough to rebuild the pool and the
//! interaction counters with [`replay`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::metrics::IterationMetrics;
use crate::cluster::ClusterAssignment;
use crate::dataset::{ClassId, SampleId};
use crate::error::{Error, Result};
use crate::pool::PoolState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    IterationStarted {
        iteration: usize,
    },
    SamplesSelected {
        iteration: usize,
        strategy: String,
        samples: Vec<SampleId>,
    },
    SampleLabeled {
        iteration: usize,
        sample: SampleId,
        class: ClassId,
    },
    Clustered {
        iteration: usize,
        k: usize,
        inertia: f64,
        kmeans_iterations: usize,
    },
    ClusterPresented {
        iteration: usize,
        cluster: usize,
        size: usize,
    },
    ClusterLabeled {
        iteration: usize,
        cluster: usize,
        class: ClassId,
        members: Vec<SampleId>,
    },
    ClusterSkipped {
        iteration: usize,
        cluster: usize,
        size: usize,
    },
    TrainingStarted {
        iteration: usize,
        samples: usize,
    },
    TrainingFinished {
        iteration: usize,
        steps: usize,
        loss: Option<f64>,
    },
    IterationFinished {
        metrics: IterationMetrics,
    },
    ClusterLabelsReset {
        iteration: usize,
        returned: usize,
    },
}

/// Receives engine events as they happen.
pub trait EventSink {
    fn record(&mut self, event: Event) -> Result<()>;

    /// Full clustering result; not part of the replayable log.
    fn clustering(&mut self, _iteration: usize, _assignment: &ClusterAssignment) {}
}

impl EventSink for Vec<Event> {
    fn record(&mut self, event: Event) -> Result<()> {
        self.push(event);
        Ok(())
    }
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl EventSink for NullSink {
    fn record(&mut self, _event: Event) -> Result<()> {
        Ok(())
    }
}

impl<S: EventSink + ?Sized> EventSink for &mut S {
    fn record(&mut self, event: Event) -> Result<()> {
        (**self).record(event)
    }

    fn clustering(&mut self, iteration: usize, assignment: &ClusterAssignment) {
        (**self).clustering(iteration, assignment)
    }
}

/// State rebuilt from an event log.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySummary {
    pub pool: PoolState,
    pub interactions: u64,
    pub samples_labeled: u64,
    pub clusters_labeled: u64,
    pub clusters_skipped: u64,
    pub iterations_finished: usize,
}

/// Incremental form of [`replay`]: feed events one at a time.
#[derive(Debug, Clone)]
pub struct Replayer {
    universe: BTreeSet<SampleId>,
    count_skipped_clusters: bool,
    state: ReplaySummary,
}

impl Replayer {
    pub fn new(train: impl IntoIterator<Item = SampleId>, count_skipped_clusters: bool) -> Result<Self> {
        let universe: BTreeSet<SampleId> = train.into_iter().collect();
        Ok(Self {
            state: ReplaySummary {
                pool: PoolState::from_ids(universe.iter().copied())?,
                interactions: 0,
                samples_labeled: 0,
                clusters_labeled: 0,
                clusters_skipped: 0,
                iterations_finished: 0,
            },
            universe,
            count_skipped_clusters,
        })
    }

    pub fn state(&self) -> &ReplaySummary {
        &self.state
    }

    pub fn apply(&mut self, event: &Event) -> Result<()> {
        let s = &mut self.state;
        match event {
            Event::SampleLabeled { sample, class, .. } => {
                s.pool.move_to_labeled(&[(*sample, *class)])?;
                s.samples_labeled += 1;
                s.interactions += 1;
            }
            Event::ClusterLabeled { class, members, .. } => {
                s.pool.move_to_cluster_labeled(members, *class)?;
                s.clusters_labeled += 1;
                s.interactions += 1;
            }
            Event::ClusterSkipped { .. } => {
                s.clusters_skipped += 1;
                if self.count_skipped_clusters {
                    s.interactions += 1;
                }
            }
            Event::ClusterLabelsReset { returned, .. } => {
                let moved = s.pool.reset_cluster_labels();
                if moved != *returned {
                    return Err(Error::invariant(format!(
                        "log says {returned} samples returned to the pool, replay moved {moved}"
                    )));
                }
            }
            Event::IterationFinished { metrics } => {
                s.iterations_finished += 1;
                if metrics.cumulative_interactions != s.interactions {
                    return Err(Error::invariant(format!(
                        "iteration {} reports {} interactions, replay counts {}",
                        metrics.iteration, metrics.cumulative_interactions, s.interactions
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn finish(self) -> Result<ReplaySummary> {
        self.state.pool.check_partition(Some(&self.universe))?;
        Ok(self.state)
    }
}

/// Applies the pool moves and interaction rules of `events` to a fresh pool over `train`.
pub fn replay<'a>(
    events: impl IntoIterator<Item = &'a Event>,
    train: impl IntoIterator<Item = SampleId>,
    count_skipped_clusters: bool,
) -> Result<ReplaySummary> {
    let mut r = Replayer::new(train, count_skipped_clusters)?;
    for event in events {
        r.apply(event)?;
    }
    r.finish()
}
