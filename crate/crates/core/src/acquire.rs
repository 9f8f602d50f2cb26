//! Individual-sample selection over the unlabeled set.

use std::cmp::Ordering;
use std::num::NonZeroUsize;

use rand::seq::index;
use rayon::prelude::*;

use crate::dataset::{FeatureTable, SampleId};
use crate::error::{Error, Result};
use crate::model::{entropy, Classifier};
use crate::pool::PoolState;
use crate::rng;

/// `min(count, |unlabeled|)` distinct unlabeled ids drawn uniformly without replacement.
pub fn select_random(pool: &PoolState, count: NonZeroUsize, seed: u64) -> Vec<SampleId> {
    let candidates: Vec<SampleId> = pool.unlabeled().iter().copied().collect();
    let amount = count.get().min(candidates.len());
    if amount == candidates.len() {
        return candidates;
    }
    let mut rng = rng::rng(seed);
    index::sample(&mut rng, candidates.len(), amount)
        .into_iter()
        .map(|i| candidates[i])
        .collect()
}

/// Entropy of the predicted class distribution for every unlabeled sample, in id order.
pub fn entropy_scores<M: Classifier + ?Sized>(
    features: &FeatureTable,
    pool: &PoolState,
    classifier: &M,
) -> Result<Vec<(SampleId, f64)>> {
    if classifier.feature_dim() != features.dim() {
        return Err(Error::config(format!(
            "classifier expects {} features, dataset has {}",
            classifier.feature_dim(),
            features.dim()
        )));
    }
    let ids: Vec<SampleId> = pool.unlabeled().iter().copied().collect();
    ids.par_iter()
        .map(|&id| {
            let p = classifier.predict_proba(features.row(id))?;
            Ok((id, entropy(&p)?))
        })
        .collect()
}

/// The `count` highest-scoring ids, descending; equal scores go to the smaller id.
pub fn top_by_score(mut scores: Vec<(SampleId, f64)>, count: usize) -> Vec<SampleId> {
    let order = |a: &(SampleId, f64), b: &(SampleId, f64)| -> Ordering { b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)) };
    let count = count.min(scores.len());
    if count == 0 {
        return Vec::new();
    }
    if count < scores.len() {
        scores.select_nth_unstable_by(count - 1, order);
        scores.truncate(count);
    }
    scores.sort_unstable_by(order);
    scores.into_iter().map(|(id, _)| id).collect()
}

/// The `min(count, |unlabeled|)` unlabeled ids with the highest predictive entropy.
pub fn select_most_uncertain<M: Classifier + ?Sized>(
    features: &FeatureTable,
    pool: &PoolState,
    classifier: &M,
    count: NonZeroUsize,
) -> Result<Vec<SampleId>> {
    Ok(top_by_score(entropy_scores(features, pool, classifier)?, count.get()))
}
