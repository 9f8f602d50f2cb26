//! Gaussian-blob datasets standing in for extracted image embeddings.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub samples_per_class: usize,
    /// Class centers lie on a sphere of this radius.
    pub center_scale: f64,
    /// Per-coordinate standard deviation around a center.
    pub noise_sigma: f64,
    /// Fraction of each class drawn around another class's center, keeping its own label.
    pub overlap_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            feature_dim: 64,
            samples_per_class: 1000,
            center_scale: 4.0,
            noise_sigma: 1.0,
            overlap_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.feature_dim == 0 || self.samples_per_class == 0 {
            return Err(Error::config("num_classes, feature_dim and samples_per_class must be positive"));
        }
        if self.num_classes > crate::dataset::MAX_CLASSES {
            return Err(Error::config("too many classes for 16-bit labels"));
        }
        if !(self.center_scale.is_finite() && self.center_scale >= 0.0) {
            return Err(Error::config("center_scale must be nonnegative"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::config("noise_sigma must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::config("overlap_fraction must be in [0, 1)"));
        }
        Ok(())
    }

    /// Samples per class drawn around a foreign center.
    pub fn overlap_per_class(&self) -> usize {
        if self.num_classes < 2 {
            return 0;
        }
        (self.overlap_fraction * self.samples_per_class as f64).round() as usize
    }
}

/// Class-balanced blobs in shuffled order; identical for identical specs.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let (c, d) = (spec.num_classes, spec.feature_dim);
    let mut rng = rng::rng(spec.seed);
    let centers: Vec<Vec<f64>> = (0..c)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| x / norm * spec.center_scale).collect()
        })
        .collect();

    let overlap = spec.overlap_per_class();
    let mut rows: Vec<(u16, Vec<f32>)> = Vec::with_capacity(c * spec.samples_per_class);
    for class in 0..c {
        for i in 0..spec.samples_per_class {
            let center = if i < overlap {
                let other = rng.random_range(0..c - 1);
                if other >= class { other + 1 } else { other }
            } else {
                class
            };
            let x = centers[center]
                .iter()
                .map(|&m| (m + spec.noise_sigma * rng.sample::<f64, _>(StandardNormal)) as f32)
                .collect();
            rows.push((class as u16, x));
        }
    }
    rows.shuffle(&mut rng);
    let labels = rows.iter().map(|(l, _)| *l).collect();
    let features = rows.into_iter().flat_map(|(_, x)| x).collect();
    Dataset::new(d, c, features, labels, None)
}
