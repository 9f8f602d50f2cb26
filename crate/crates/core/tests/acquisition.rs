mod common;

use std::collections::BTreeMap;
use std::num::NonZeroUsize;

use alca::acquire::{select_most_uncertain, select_random};
use alca::model::entropy;
use alca::{Classifier, PoolState, Result, SoftmaxRegression, TrainConfig};
use alca::dataset::FeatureTable;
use rand::Rng;

fn nz(n: usize) -> NonZeroUsize {
    NonZeroUsize::new(n).unwrap()
}

#[test]
fn matches_a_full_sort_of_entropies() {
    let mut r = common::rng(1);
    for case in 0..30 {
        let data = common::random_dataset(50, 4, 5, case);
        let m = SoftmaxRegression::with_init_scale(4, 5, case, 1.0).unwrap();
        let mut pool = PoolState::new(&data).unwrap();
        let taken: Vec<(usize, usize)> = (0..50).filter(|_| r.random_bool(0.2)).map(|i| (i, 0)).collect();
        pool.move_to_labeled(&taken).unwrap();
        let got = select_most_uncertain(data.features(), &pool, &m, nz(10)).unwrap();

        let mut all: Vec<(f64, usize)> = pool
            .unlabeled()
            .iter()
            .map(|&id| (entropy(&m.predict_proba(data.features().row(id)).unwrap()).unwrap(), id))
            .collect();
        all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let expected: Vec<usize> = all.into_iter().take(10).map(|p| p.1).collect();
        assert_eq!(got, expected);
    }
}

/// Binary classifier whose probabilities are pulled toward 1/2. Entropy is
/// strictly decreasing in |p - 1/2|, so the ranking must not change.
#[derive(Clone)]
struct Scaled(SoftmaxRegression, f64);

impl Classifier for Scaled {
    fn num_classes(&self) -> usize {
        self.0.num_classes()
    }
    fn feature_dim(&self) -> usize {
        self.0.feature_dim()
    }
    fn predict_proba(&self, x: &[f32]) -> Result<Vec<f64>> {
        let p = self.0.predict_proba(x)?;
        let q0 = 0.5 + (p[0] - 0.5) * self.1;
        Ok(vec![q0, 1.0 - q0])
    }
    fn reset(&mut self) {}
    fn train(&mut self, _: &FeatureTable, _: &BTreeMap<usize, usize>, _: &TrainConfig) -> Result<alca::model::TrainReport> {
        unimplemented!()
    }
}

#[test]
fn order_preserving_transform_keeps_the_selection() {
    for case in 0..20 {
        let data = common::random_dataset(60, 3, 2, 100 + case);
        let m = SoftmaxRegression::with_init_scale(3, 2, case, 2.0).unwrap();
        let pool = PoolState::new(&data).unwrap();
        let a = select_most_uncertain(data.features(), &pool, &m, nz(15)).unwrap();
        let b = select_most_uncertain(data.features(), &pool, &Scaled(m, 0.5), nz(15)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn random_selection_covers_the_pool_uniformly() {
    let data = common::random_dataset(20, 1, 1, 0);
    let pool = PoolState::new(&data).unwrap();
    let trials = 4000;
    let mut counts = [0usize; 20];
    for seed in 0..trials {
        let picked = select_random(&pool, nz(5), seed);
        let mut sorted = picked.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 5);
        picked.iter().for_each(|&id| counts[id] += 1);
    }
    let expected = trials as f64 * 5.0 / 20.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 19 degrees of freedom, 0.999 quantile
    assert!(chi2 < 43.82, "chi-square {chi2}, counts {counts:?}");
}

#[test]
fn selection_is_deterministic() {
    let data = common::random_dataset(40, 2, 3, 7);
    let pool = PoolState::new(&data).unwrap();
    assert_eq!(select_random(&pool, nz(7), 3), select_random(&pool, nz(7), 3));
    let m = SoftmaxRegression::new(2, 3, 1).unwrap();
    assert_eq!(
        select_most_uncertain(data.features(), &pool, &m, nz(7)).unwrap(),
        select_most_uncertain(data.features(), &pool, &m, nz(7)).unwrap()
    );
}
