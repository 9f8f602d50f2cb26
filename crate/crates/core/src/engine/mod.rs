//! The annotate / train / evaluate loop.
//!
//! Each iteration of a [`Run`]:
//!
//! 1. resets the classifier to its initial parameters;
//! 2. spends the interaction budget in the scenario's order, scoring
//!    uncertainty with the classifier trained in the previous iteration
//!    (the fresh classifier on iteration 1);
//! 3. trains on the individually labeled plus cluster-labeled samples;
//! 4. evaluates on the test split and records metrics;
//! 5. returns every cluster-labeled sample to the unlabeled pool.
//!
//! Individually labeled samples stay labeled for the rest of the run.

mod config;
mod events;
mod metrics;

use std::collections::BTreeSet;
use std::num::NonZeroUsize;

use rayon::prelude::*;

pub use config::{ClusterCount, ExperimentConfig, Scenario, Splits};
pub use events::{replay, Event, EventSink, NullSink, ReplaySummary, Replayer};
pub use metrics::{aggregate, AggregateRow, IterationMetrics, MeanStd, MetricsRecord};

use crate::acquire;
use crate::cluster::{self, KMeansConfig};
use crate::dataset::{ClassId, Dataset, SampleId};
use crate::error::{Error, Result};
use crate::model::{evaluate, Classifier, SoftmaxRegression, TrainConfig};
use crate::oracle::{ClusterDecision, ClusterQuery, Expert, SimulatedExpert};
use crate::rng;

const STREAM_INIT: u64 = 1;
const STREAM_SELECT: u64 = 2;
const STREAM_KMEANS: u64 = 3;
const STREAM_TRAIN: u64 = 4;

/// Seed of repeat `repeat` of an experiment seeded with `seed`.
pub fn repeat_seed(seed: u64, repeat: usize) -> u64 {
    seed.wrapping_add(repeat as u64)
}

/// The classifier an experiment starts every iteration from.
pub fn initial_classifier(config: &ExperimentConfig, dataset: &Dataset, repeat: usize) -> Result<SoftmaxRegression> {
    if config.zero_init {
        SoftmaxRegression::zeros(dataset.feature_dim(), dataset.num_classes())
    } else {
        SoftmaxRegression::with_init_scale(
            dataset.feature_dim(),
            dataset.num_classes(),
            rng::derive(repeat_seed(config.seed, repeat), &[STREAM_INIT]),
            config.init_scale,
        )
    }
}

/// Outcome of one cluster-annotation step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClusterStep {
    pub presented: usize,
    pub labeled: usize,
    pub skipped: usize,
    pub samples_labeled: usize,
    pub interactions: u64,
}

#[derive(Debug, Default, Clone, Copy)]
struct IterationTally {
    interactions: u64,
    clusters: ClusterStep,
}

/// One repeat of an experiment: pool, classifier and counters.
#[derive(Debug, Clone)]
pub struct Run<'a, M: Classifier + Clone = SoftmaxRegression> {
    dataset: &'a Dataset,
    universe: BTreeSet<SampleId>,
    test: Vec<SampleId>,
    config: ExperimentConfig,
    repeat: usize,
    seed: u64,
    pool: crate::pool::PoolState,
    model: M,
    trained: Option<M>,
    interactions: u64,
    iteration: usize,
    history: Vec<IterationMetrics>,
    tally: IterationTally,
}

impl<'a> Run<'a, SoftmaxRegression> {
    /// A run with the reference classifier.
    pub fn with_default_model(
        dataset: &'a Dataset,
        splits: &Splits,
        config: ExperimentConfig,
        repeat: usize,
    ) -> Result<Self> {
        let model = initial_classifier(&config, dataset, repeat)?;
        Run::new(dataset, splits, config, repeat, model)
    }
}

impl<'a, M: Classifier + Clone> Run<'a, M> {
    pub fn new(dataset: &'a Dataset, splits: &Splits, config: ExperimentConfig, repeat: usize, model: M) -> Result<Self> {
        config.validate()?;
        let splits = Splits::new(splits.train.clone(), splits.test.clone(), dataset.len())?;
        if model.feature_dim() != dataset.feature_dim() || model.num_classes() != dataset.num_classes() {
            return Err(Error::config("classifier shape does not match the dataset"));
        }
        let universe: BTreeSet<SampleId> = splits.train.iter().copied().collect();
        Ok(Self {
            dataset,
            pool: crate::pool::PoolState::from_ids(universe.iter().copied())?,
            universe,
            test: splits.test,
            seed: repeat_seed(config.seed, repeat),
            config,
            repeat,
            model,
            trained: None,
            interactions: 0,
            iteration: 0,
            history: Vec::new(),
            tally: IterationTally::default(),
        })
    }

    pub fn pool(&self) -> &crate::pool::PoolState {
        &self.pool
    }

    pub fn interactions(&self) -> u64 {
        self.interactions
    }

    /// Number of completed iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn history(&self) -> &[IterationMetrics] {
        &self.history
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The classifier used for acquisition in the next iteration.
    pub fn acquisition_model(&self) -> &M {
        self.trained.as_ref().unwrap_or(&self.model)
    }

    fn current_iteration(&self) -> usize {
        self.iteration + 1
    }

    fn stream(&self, stream: u64) -> u64 {
        rng::derive(self.seed, &[stream, self.current_iteration() as u64])
    }

    /// Picks up to `count` unlabeled samples (uncertainty, or random under
    /// [`Scenario::Random`]), asks the expert for each and moves them to the
    /// labeled set. One interaction per sample.
    pub fn annotate_uncertain_step(
        &mut self,
        count: usize,
        expert: &mut dyn Expert,
        sink: &mut dyn EventSink,
    ) -> Result<usize> {
        let Some(count) = NonZeroUsize::new(count) else {
            return Ok(0);
        };
        if self.pool.unlabeled().is_empty() {
            return Ok(0);
        }
        let iteration = self.current_iteration();
        let (strategy, picked) = match self.config.scenario {
            Scenario::Random => ("random", acquire::select_random(&self.pool, count, self.stream(STREAM_SELECT))),
            _ => (
                "max-entropy",
                acquire::select_most_uncertain(
                    self.dataset.features(),
                    &self.pool,
                    self.trained.as_ref().unwrap_or(&self.model),
                    count,
                )?,
            ),
        };
        sink.record(Event::SamplesSelected {
            iteration,
            strategy: strategy.into(),
            samples: picked.clone(),
        })?;
        for &id in &picked {
            let class = expert.label_sample(id)?;
            self.check_class(class)?;
            self.pool.move_to_labeled(&[(id, class)])?;
            self.interactions += 1;
            self.tally.interactions += 1;
            sink.record(Event::SampleLabeled {
                iteration,
                sample: id,
                class,
            })?;
        }
        Ok(picked.len())
    }

    /// Clusters the unlabeled pool and asks the expert to review every
    /// non-empty cluster. Labeled clusters move to the cluster-labeled set;
    /// skipped ones stay unlabeled and are not re-clustered this iteration.
    pub fn annotate_clusters_step(
        &mut self,
        budget: usize,
        expert: &mut dyn Expert,
        sink: &mut dyn EventSink,
    ) -> Result<ClusterStep> {
        let mut step = ClusterStep::default();
        if budget == 0 || self.pool.unlabeled().is_empty() {
            return Ok(step);
        }
        let iteration = self.current_iteration();
        let ids: Vec<SampleId> = self.pool.unlabeled().iter().copied().collect();
        let k = match self.config.clusters_per_iteration {
            ClusterCount::Budget => budget,
            ClusterCount::Auto => cluster::default_cluster_count(ids.len()),
            ClusterCount::Fixed(k) => k,
        };
        let kcfg = KMeansConfig {
            k,
            max_iters: self.config.kmeans_iters,
            seed: self.stream(STREAM_KMEANS),
            normalize: self.config.normalize_features,
        };
        let assignment = cluster::kmeans(self.dataset.features(), &ids, &kcfg)?;
        sink.record(Event::Clustered {
            iteration,
            k: assignment.k(),
            inertia: assignment.inertia,
            kmeans_iterations: assignment.iterations,
        })?;
        sink.clustering(iteration, &assignment);

        for (c, members) in assignment.members.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let query = ClusterQuery {
                iteration,
                cluster: c,
                members: members.clone(),
                representatives: cluster::representatives(
                    &assignment,
                    self.dataset.features(),
                    c,
                    self.config.representatives,
                )?,
            };
            sink.record(Event::ClusterPresented {
                iteration,
                cluster: c,
                size: members.len(),
            })?;
            step.presented += 1;
            match expert.review_cluster(&query)? {
                ClusterDecision::Label(class) => {
                    self.check_class(class)?;
                    self.pool.move_to_cluster_labeled(members, class)?;
                    step.labeled += 1;
                    step.samples_labeled += members.len();
                    step.interactions += 1;
                    sink.record(Event::ClusterLabeled {
                        iteration,
                        cluster: c,
                        class,
                        members: members.clone(),
                    })?;
                }
                ClusterDecision::Skip => {
                    step.skipped += 1;
                    if self.config.count_skipped_clusters {
                        step.interactions += 1;
                    }
                    sink.record(Event::ClusterSkipped {
                        iteration,
                        cluster: c,
                        size: members.len(),
                    })?;
                }
            }
        }
        self.interactions += step.interactions;
        self.tally.interactions += step.interactions;
        self.tally.clusters.presented += step.presented;
        self.tally.clusters.labeled += step.labeled;
        self.tally.clusters.skipped += step.skipped;
        self.tally.clusters.samples_labeled += step.samples_labeled;
        Ok(step)
    }

    fn check_class(&self, class: ClassId) -> Result<()> {
        if class >= self.dataset.num_classes() {
            return Err(Error::validation(format!(
                "expert answered class {class}, outside [0, {})",
                self.dataset.num_classes()
            )));
        }
        Ok(())
    }

    /// Runs one full iteration and returns its metrics.
    pub fn run_iteration(&mut self, expert: &mut dyn Expert, sink: &mut dyn EventSink) -> Result<IterationMetrics> {
        let iteration = self.current_iteration();
        self.iteration_inner(expert, sink).map_err(|e| Error::Run {
            repeat: self.repeat,
            iteration,
            source: Box::new(e),
        })
    }

    fn iteration_inner(&mut self, expert: &mut dyn Expert, sink: &mut dyn EventSink) -> Result<IterationMetrics> {
        let iteration = self.current_iteration();
        self.tally = IterationTally::default();
        sink.record(Event::IterationStarted { iteration })?;
        expert.begin_iteration(iteration);
        self.model.reset();

        let (individual, clusters) = self.config.scenario.split_budget(self.config.interactions_per_iteration);
        match self.config.scenario {
            Scenario::Random | Scenario::UncertainOnly => {
                self.annotate_uncertain_step(individual, expert, sink)?;
            }
            Scenario::ClusterOnly => {
                self.annotate_clusters_step(clusters, expert, sink)?;
            }
            Scenario::UncertainThenCluster => {
                self.annotate_uncertain_step(individual, expert, sink)?;
                self.annotate_clusters_step(clusters, expert, sink)?;
            }
            Scenario::ClusterThenUncertain => {
                self.annotate_clusters_step(clusters, expert, sink)?;
                self.annotate_uncertain_step(individual, expert, sink)?;
            }
        }

        let labels = self.pool.training_labels();
        sink.record(Event::TrainingStarted {
            iteration,
            samples: labels.len(),
        })?;
        let train_cfg = TrainConfig {
            seed: self.stream(STREAM_TRAIN),
            ..self.config.train
        };
        let (steps, loss) = if labels.is_empty() {
            (0, None)
        } else {
            let report = self.model.train(self.dataset.features(), &labels, &train_cfg)?;
            (report.steps, Some(report.final_loss()))
        };
        sink.record(Event::TrainingFinished { iteration, steps, loss })?;

        let test_accuracy = evaluate(&self.model, self.dataset, &self.test)?;
        let truth = self.dataset.truth();
        let cl = self.pool.cluster_labeled();
        let wrong = cl.iter().filter(|(&id, &c)| truth.label(id) != c).count();
        let metrics = IterationMetrics {
            iteration,
            test_accuracy,
            cluster_label_error_rate: if cl.is_empty() { 0.0 } else { wrong as f64 / cl.len() as f64 },
            total_annotated: labels.len(),
            individually_labeled: self.pool.labeled().len(),
            cluster_labeled: cl.len(),
            interactions: self.tally.interactions,
            cumulative_interactions: self.interactions,
            clusters_presented: self.tally.clusters.presented,
            clusters_labeled: self.tally.clusters.labeled,
            clusters_skipped: self.tally.clusters.skipped,
            train_loss: loss,
        };
        sink.record(Event::IterationFinished {
            metrics: metrics.clone(),
        })?;

        self.trained = Some(self.model.clone());
        let returned = self.pool.reset_cluster_labels();
        sink.record(Event::ClusterLabelsReset { iteration, returned })?;
        self.pool.check_partition(Some(&self.universe))?;

        self.iteration = iteration;
        self.history.push(metrics.clone());
        Ok(metrics)
    }

    /// Runs the remaining iterations up to `config.iterations`.
    pub fn run_to_end(&mut self, expert: &mut dyn Expert, sink: &mut dyn EventSink) -> Result<&[IterationMetrics]> {
        while self.iteration < self.config.iterations {
            self.run_iteration(expert, sink)?;
        }
        Ok(&self.history)
    }
}

/// One simulated repeat, start to finish.
pub fn run_repeat(
    config: &ExperimentConfig,
    dataset: &Dataset,
    splits: &Splits,
    repeat: usize,
    sink: &mut dyn EventSink,
) -> Result<Vec<IterationMetrics>> {
    let mut run = Run::with_default_model(dataset, splits, config.clone(), repeat)?;
    let mut expert = SimulatedExpert::new(dataset.truth(), config.oracle);
    run.run_to_end(&mut expert, sink)?;
    Ok(run.history)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub scenario: Scenario,
    /// One series per repeat, each `config.iterations` long.
    pub series: Vec<Vec<IterationMetrics>>,
    pub events: Vec<Vec<Event>>,
    pub aggregate: Vec<AggregateRow>,
}

impl ExperimentResult {
    /// Flattened metric records, repeat-major.
    pub fn records(&self, seed: u64) -> Vec<MetricsRecord> {
        self.series
            .iter()
            .enumerate()
            .flat_map(|(r, s)| {
                s.iter().map(move |m| MetricsRecord {
                    scenario: self.scenario,
                    repeat: r,
                    seed: repeat_seed(seed, r),
                    metrics: m.clone(),
                })
            })
            .collect()
    }
}

/// All repeats of a simulated experiment, in parallel.
pub fn run_experiment(config: &ExperimentConfig, dataset: &Dataset, splits: &Splits) -> Result<ExperimentResult> {
    config.validate()?;
    let outcomes: Vec<Result<(Vec<IterationMetrics>, Vec<Event>)>> = (0..config.repeats)
        .into_par_iter()
        .map(|r| {
            let mut events = Vec::new();
            let series = run_repeat(config, dataset, splits, r, &mut events)?;
            Ok((series, events))
        })
        .collect();
    let mut series = Vec::with_capacity(config.repeats);
    let mut events = Vec::with_capacity(config.repeats);
    for outcome in outcomes {
        let (s, e) = outcome?;
        series.push(s);
        events.push(e);
    }
    Ok(ExperimentResult {
        scenario: config.scenario,
        aggregate: aggregate(&series),
        series,
        events,
    })
}

/// Accuracy of the classifier trained on every training sample with its true
/// label, under the same training settings as the experiment.
pub fn supervised_accuracy(config: &ExperimentConfig, dataset: &Dataset, splits: &Splits, repeat: usize) -> Result<f64> {
    let mut model = initial_classifier(config, dataset, repeat)?;
    let labels = splits
        .train
        .iter()
        .map(|&id| (id, dataset.truth().label(id)))
        .collect();
    let cfg = TrainConfig {
        seed: rng::derive(repeat_seed(config.seed, repeat), &[STREAM_TRAIN, 0]),
        ..config.train
    };
    model.train(dataset.features(), &labels, &cfg)?;
    evaluate(&model, dataset, &splits.test)
}
