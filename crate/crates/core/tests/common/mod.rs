#![allow(dead_code)]

use alca::ingest::{generate_synthetic, SyntheticSpec};
use alca::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn blobs(classes: usize, dim: usize, per_class: usize, seed: u64) -> Dataset {
    generate_synthetic(&SyntheticSpec {
        num_classes: classes,
        feature_dim: dim,
        samples_per_class: per_class,
        center_scale: 4.0,
        noise_sigma: 1.0,
        overlap_fraction: 0.1,
        seed,
    })
    .unwrap()
}

pub fn random_dataset(n: usize, dim: usize, classes: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let features = (0..n * dim).map(|_| r.random_range(-3.0f32..3.0)).collect();
    let labels = (0..n).map(|_| r.random_range(0..classes) as u16).collect();
    Dataset::new(dim, classes, features, labels, None).unwrap()
}
