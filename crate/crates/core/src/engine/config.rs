use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cluster::DEFAULT_KMEANS_ITERS;
use crate::dataset::SampleId;
use crate::error::{Error, Result};
use crate::model::{TrainConfig, DEFAULT_INIT_SCALE};
use crate::oracle::OracleConfig;
use crate::rng;

/// How one iteration spends its interaction budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    /// Label uniformly random samples.
    Random,
    /// Label the highest-entropy samples.
    UncertainOnly,
    /// Review clusters only.
    ClusterOnly,
    /// Label uncertain samples first, then review clusters of what is left.
    UncertainThenCluster,
    /// Review clusters first, then label uncertain samples among the rest.
    ClusterThenUncertain,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Random,
        Scenario::UncertainOnly,
        Scenario::ClusterOnly,
        Scenario::UncertainThenCluster,
        Scenario::ClusterThenUncertain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Random => "random",
            Scenario::UncertainOnly => "uncertain-only",
            Scenario::ClusterOnly => "cluster-only",
            Scenario::UncertainThenCluster => "uncertain+cluster",
            Scenario::ClusterThenUncertain => "cluster+uncertain",
        }
    }

    pub fn uses_clusters(self) -> bool {
        matches!(
            self,
            Scenario::ClusterOnly | Scenario::UncertainThenCluster | Scenario::ClusterThenUncertain
        )
    }

    /// `(individual samples, cluster budget)` for `n` interactions.
    pub fn split_budget(self, n: usize) -> (usize, usize) {
        match self {
            Scenario::Random | Scenario::UncertainOnly => (n, 0),
            Scenario::ClusterOnly => (0, n),
            Scenario::UncertainThenCluster | Scenario::ClusterThenUncertain => (n / 2, n.div_ceil(2)),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
                Error::config(format!("unknown scenario {s:?}; expected one of: {}", names.join(", ")))
            })
    }
}

impl Serialize for Scenario {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Scenario {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Number of clusters requested from each cluster-annotation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterCount {
    /// As many clusters as the step's interaction budget.
    #[default]
    Budget,
    /// `ceil(|unlabeled| / 75)`.
    Auto,
    Fixed(usize),
}

impl Serialize for ClusterCount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ClusterCount::Budget => s.serialize_str("budget"),
            ClusterCount::Auto => s.serialize_str("auto"),
            ClusterCount::Fixed(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for ClusterCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(k) => Ok(ClusterCount::Fixed(k as usize)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl FromStr for ClusterCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "budget" => Ok(ClusterCount::Budget),
            "auto" => Ok(ClusterCount::Auto),
            n => n
                .parse()
                .map(ClusterCount::Fixed)
                .map_err(|_| Error::config(format!("clusters_per_iteration must be \"budget\", \"auto\" or an integer, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub iterations: usize,
    pub interactions_per_iteration: usize,
    pub clusters_per_iteration: ClusterCount,
    pub oracle: OracleConfig,
    pub train: TrainConfig,
    pub kmeans_iters: usize,
    /// L2-normalize features before clustering.
    pub normalize_features: bool,
    pub repeats: usize,
    pub seed: u64,
    /// Count a skipped cluster review as one interaction.
    pub count_skipped_clusters: bool,
    /// Members shown per cluster review, nearest to the centroid first.
    pub representatives: usize,
    /// Start every classifier at exactly zero instead of small random weights.
    pub zero_init: bool,
    pub init_scale: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::UncertainThenCluster,
            iterations: 10,
            interactions_per_iteration: 200,
            clusters_per_iteration: ClusterCount::Budget,
            oracle: OracleConfig::default(),
            train: TrainConfig::default(),
            kmeans_iters: DEFAULT_KMEANS_ITERS,
            normalize_features: false,
            repeats: 1,
            seed: 0,
            count_skipped_clusters: true,
            representatives: 24,
            zero_init: false,
            init_scale: DEFAULT_INIT_SCALE,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("iterations must be positive"));
        }
        if self.interactions_per_iteration == 0 {
            return Err(Error::config("interactions_per_iteration must be positive"));
        }
        if self.clusters_per_iteration == ClusterCount::Fixed(0) {
            return Err(Error::config("clusters_per_iteration must be positive"));
        }
        if self.kmeans_iters == 0 {
            return Err(Error::config("kmeans_iters must be positive"));
        }
        if self.repeats == 0 {
            return Err(Error::config("repeats must be positive"));
        }
        if self.representatives == 0 {
            return Err(Error::config("representatives must be positive"));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::config("init_scale must be nonnegative"));
        }
        self.oracle.validate()?;
        self.train.validate()
    }
}

/// Disjoint training pool and evaluation ids over one dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<SampleId>,
    pub test: Vec<SampleId>,
}

impl Splits {
    pub fn new(train: Vec<SampleId>, test: Vec<SampleId>, dataset_len: usize) -> Result<Self> {
        if train.is_empty() || test.is_empty() {
            return Err(Error::config("train and test splits must both be non-empty"));
        }
        let t: BTreeSet<_> = train.iter().copied().collect();
        if t.len() != train.len() {
            return Err(Error::config("train split repeats an id"));
        }
        let mut seen = BTreeSet::new();
        for &id in &test {
            if t.contains(&id) || !seen.insert(id) {
                return Err(Error::config(format!("test id {id} overlaps the train split or repeats")));
            }
        }
        if let Some(&bad) = train.iter().chain(&test).find(|&&id| id >= dataset_len) {
            return Err(Error::config(format!("split id {bad} is out of range")));
        }
        Ok(Self { train, test })
    }

    /// Shuffles `0..n` and holds out `test_count` ids.
    pub fn random(n: usize, test_count: usize, seed: u64) -> Result<Self> {
        let mut ids: Vec<SampleId> = (0..n).collect();
        ids.shuffle(&mut rng::rng(seed));
        let test_count = test_count.min(n);
        let mut test = ids.split_off(n - test_count);
        ids.sort_unstable();
        test.sort_unstable();
        Self::new(ids, test, n)
    }

    /// First `train_len` ids train, the rest test.
    pub fn head_tail(n: usize, train_len: usize) -> Result<Self> {
        Self::new((0..train_len.min(n)).collect(), (train_len.min(n)..n).collect(), n)
    }
}
