//! Three-way partition of the training pool.
//!
//! Every training sample lives in exactly one of: the unlabeled set, the
//! individually labeled set, or the cluster-labeled set. Moves are atomic: a
//! batch either applies completely or leaves the pool untouched.

use std::collections::{BTreeMap, BTreeSet};

use crate::dataset::{ClassId, Dataset, SampleId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PoolState {
    unlabeled: BTreeSet<SampleId>,
    labeled: BTreeMap<SampleId, ClassId>,
    cluster_labeled: BTreeMap<SampleId, ClassId>,
}

impl PoolState {
    /// Every sample of `dataset` starts unlabeled.
    pub fn new(dataset: &Dataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::config("cannot build a pool from an empty dataset"));
        }
        Ok(Self::from_ids(dataset.ids()).expect("non-empty"))
    }

    /// Pool over an explicit training split.
    pub fn from_ids(ids: impl IntoIterator<Item = SampleId>) -> Result<Self> {
        let unlabeled: BTreeSet<_> = ids.into_iter().collect();
        if unlabeled.is_empty() {
            return Err(Error::config("cannot build a pool from an empty training split"));
        }
        Ok(Self {
            unlabeled,
            ..Default::default()
        })
    }

    pub fn unlabeled(&self) -> &BTreeSet<SampleId> {
        &self.unlabeled
    }

    pub fn labeled(&self) -> &BTreeMap<SampleId, ClassId> {
        &self.labeled
    }

    pub fn cluster_labeled(&self) -> &BTreeMap<SampleId, ClassId> {
        &self.cluster_labeled
    }

    /// Total number of samples across the three sets.
    pub fn len(&self) -> usize {
        self.unlabeled.len() + self.labeled.len() + self.cluster_labeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Labels available for training: the union of both labeled sets.
    pub fn training_labels(&self) -> BTreeMap<SampleId, ClassId> {
        let mut all = self.labeled.clone();
        all.extend(self.cluster_labeled.iter().map(|(&k, &v)| (k, v)));
        all
    }

    /// Moves individually annotated samples from the unlabeled set to the labeled set.
    pub fn move_to_labeled(&mut self, assignments: &[(SampleId, ClassId)]) -> Result<()> {
        self.check_unlabeled(assignments.iter().map(|&(id, _)| id), "labeled")?;
        for &(id, class) in assignments {
            self.unlabeled.remove(&id);
            self.labeled.insert(id, class);
        }
        Ok(())
    }

    /// Moves a whole cluster to the cluster-labeled set under one class.
    pub fn move_to_cluster_labeled(&mut self, ids: &[SampleId], label: ClassId) -> Result<()> {
        self.check_unlabeled(ids.iter().copied(), "cluster-labeled")?;
        for &id in ids {
            self.unlabeled.remove(&id);
            self.cluster_labeled.insert(id, label);
        }
        Ok(())
    }

    /// Returns every cluster-labeled sample to the unlabeled set. Returns how many moved.
    pub fn reset_cluster_labels(&mut self) -> usize {
        let moved = self.cluster_labeled.len();
        self.unlabeled.extend(std::mem::take(&mut self.cluster_labeled).into_keys());
        moved
    }

    /// Checks disjointness and, when `universe` is given, coverage.
    pub fn check_partition(&self, universe: Option<&BTreeSet<SampleId>>) -> Result<()> {
        for id in self.labeled.keys() {
            if self.unlabeled.contains(id) || self.cluster_labeled.contains_key(id) {
                return Err(Error::invariant(format!("sample {id} is in two sets")));
            }
        }
        for id in self.cluster_labeled.keys() {
            if self.unlabeled.contains(id) {
                return Err(Error::invariant(format!("sample {id} is in two sets")));
            }
        }
        if let Some(universe) = universe {
            let covered = self
                .unlabeled
                .iter()
                .chain(self.labeled.keys())
                .chain(self.cluster_labeled.keys())
                .copied()
                .collect::<BTreeSet<_>>();
            if &covered != universe || covered.len() != self.len() {
                return Err(Error::invariant("pool does not cover the training split exactly"));
            }
        }
        Ok(())
    }

    fn check_unlabeled(&self, ids: impl Iterator<Item = SampleId>, target: &str) -> Result<()> {
        let mut seen = BTreeSet::new();
        for id in ids {
            if !self.unlabeled.contains(&id) {
                return Err(Error::invariant(format!(
                    "sample {id} cannot move to {target}: it is not unlabeled"
                )));
            }
            if !seen.insert(id) {
                return Err(Error::invariant(format!("sample {id} appears twice in one move")));
            }
        }
        Ok(())
    }
}
