//! Active learning with cluster annotation.
//!
//! An expert labels either single samples chosen by predictive entropy or
//! whole k-means clusters of the unlabeled pool, a classifier is retrained
//! from the same initial state every iteration, and the run records how much
//! accuracy each unit of expert effort buys.
//!
//! ```
//! use alca::engine::{run_experiment, ExperimentConfig, Scenario, Splits};
//! use alca::ingest::{generate_synthetic, SyntheticSpec};
//!
//! let data = generate_synthetic(&SyntheticSpec {
//!     num_classes: 3,
//!     feature_dim: 4,
//!     samples_per_class: 40,
//!     ..Default::default()
//! })
//! .unwrap();
//! let splits = Splits::random(data.len(), 30, 0).unwrap();
//! let config = ExperimentConfig {
//!     scenario: Scenario::ClusterOnly,
//!     iterations: 2,
//!     interactions_per_iteration: 5,
//!     ..Default::default()
//! };
//! let result = run_experiment(&config, &data, &splits).unwrap();
//! assert_eq!(result.series[0].len(), 2);
//! assert_eq!(result.series[0][1].cumulative_interactions, 10);
//! ```

pub mod acquire;
pub mod cluster;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod ingest;
pub mod model;
pub mod oracle;
pub mod pool;
pub mod rng;

pub use cluster::{ClusterAssignment, KMeansConfig};
pub use dataset::{ClassId, Dataset, FeatureTable, GroundTruth, Sample, SampleId};
pub use engine::{ExperimentConfig, IterationMetrics, Run, Scenario, Splits};
pub use error::{Error, Result};
pub use model::{Classifier, SoftmaxRegression, TrainConfig};
pub use oracle::{ClusterDecision, Expert, OracleConfig, SimulatedExpert};
pub use pool::PoolState;
