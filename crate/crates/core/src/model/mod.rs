//! Probabilistic classifiers over fixed embeddings.
//!
//! [`SoftmaxRegression`] is the reference model: a linear layer followed by a
//! softmax, trained by mini-batch SGD with heavy-ball momentum and L2 weight
//! decay on the mean cross-entropy. The engine only talks to the
//! [`Classifier`] trait, so any other model with the same contract can be
//! dropped in.

mod checkpoint;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::dataset::{ClassId, Dataset, FeatureTable, SampleId};
use crate::error::{Error, Result};
use crate::rng;

/// Tolerance on `sum(p) == 1` accepted by [`entropy`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Half-width of the uniform distribution used for initial weights.
pub const DEFAULT_INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 1e-3,
            weight_decay: 5e-4,
            momentum: 0.9,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("train.learning_rate must be a positive number"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("train.weight_decay must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("train.momentum must be in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    /// Mean objective (cross-entropy plus weight decay) per epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(f64::NAN)
    }
}

/// Contract the engine needs from a model.
pub trait Classifier: Send + Sync {
    fn num_classes(&self) -> usize;
    fn feature_dim(&self) -> usize;

    /// Class probabilities for one feature vector.
    fn predict_proba(&self, features: &[f32]) -> Result<Vec<f64>>;

    /// Restores the parameters captured at construction.
    fn reset(&mut self);

    /// Fits the model to `labels` (sample id to class), starting from the current parameters.
    fn train(
        &mut self,
        features: &FeatureTable,
        labels: &BTreeMap<SampleId, ClassId>,
        config: &TrainConfig,
    ) -> Result<TrainReport>;

    /// Argmax of [`Classifier::predict_proba`], ties to the smallest class.
    fn predict(&self, features: &[f32]) -> Result<ClassId> {
        Ok(argmax(&self.predict_proba(features)?))
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// Shannon entropy in nats. Zero-probability classes contribute nothing.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::validation("entropy of an empty distribution"));
    }
    if let Some(i) = p.iter().position(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::validation(format!("probability {i} is {}", p[i])));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::validation(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum::<f64>().max(0.0))
}

/// Fraction of `ids` whose predicted class matches the ground truth.
pub fn evaluate<M: Classifier + ?Sized>(model: &M, dataset: &Dataset, ids: &[SampleId]) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::validation("cannot evaluate on an empty id set"));
    }
    let mut correct = 0usize;
    for &id in ids {
        if model.predict(dataset.features().row(id))? == dataset.truth().label(id) {
            correct += 1;
        }
    }
    Ok(correct as f64 / ids.len() as f64)
}

/// Gradient of the training objective with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    /// Row-major `num_classes x feature_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Multinomial logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxRegression {
    dim: usize,
    classes: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    init_weights: Vec<f64>,
    init_bias: Vec<f64>,
}

impl SoftmaxRegression {
    /// Weights uniform in `[-DEFAULT_INIT_SCALE, DEFAULT_INIT_SCALE]`, bias zero.
    pub fn new(feature_dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        Self::with_init_scale(feature_dim, num_classes, seed, DEFAULT_INIT_SCALE)
    }

    pub fn with_init_scale(feature_dim: usize, num_classes: usize, seed: u64, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::config("init scale must be a nonnegative number"));
        }
        let mut rng = rng::rng(seed);
        let weights = (0..feature_dim * num_classes)
            .map(|_| if scale > 0.0 { rng.random_range(-scale..=scale) } else { 0.0 })
            .collect();
        Self::from_parameters(feature_dim, num_classes, weights, vec![0.0; num_classes])
    }

    /// All parameters zero; predicts the uniform distribution everywhere.
    pub fn zeros(feature_dim: usize, num_classes: usize) -> Result<Self> {
        Self::from_parameters(
            feature_dim,
            num_classes,
            vec![0.0; feature_dim * num_classes],
            vec![0.0; num_classes],
        )
    }

    /// Wraps explicit parameters; they also become the reset state.
    pub fn from_parameters(feature_dim: usize, num_classes: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if feature_dim == 0 || num_classes == 0 {
            return Err(Error::config("classifier dimensions must be positive"));
        }
        if weights.len() != feature_dim * num_classes || bias.len() != num_classes {
            return Err(Error::config("parameter shapes do not match the classifier dimensions"));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite classifier parameter"));
        }
        Ok(Self {
            dim: feature_dim,
            classes: num_classes,
            init_weights: weights.clone(),
            init_bias: bias.clone(),
            weights,
            bias,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Linear scores before the softmax.
    pub fn logits(&self, x: &[f32]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::config(format!(
                "input has {} features, classifier expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(self.logits_unchecked(x))
    }

    fn logits_unchecked(&self, x: &[f32]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.dim)
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(x).map(|(w, &x)| w * x as f64).sum::<f64>())
            .collect()
    }

    /// Objective and its gradient on one batch:
    /// mean cross-entropy plus `weight_decay / 2` times the squared norm of
    /// all parameters (weights and bias).
    pub fn loss_and_gradient(&self, rows: &[&[f32]], labels: &[ClassId], weight_decay: f64) -> (f64, Gradient) {
        debug_assert_eq!(rows.len(), labels.len());
        let n = rows.len() as f64;
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; self.classes];
        let mut ce = 0.0;
        for (x, &y) in rows.iter().zip(labels) {
            let logits = self.logits_unchecked(x);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            ce += lse - logits[y];
            for (c, z) in logits.iter().enumerate() {
                let delta = (z - lse).exp() - if c == y { 1.0 } else { 0.0 };
                gb[c] += delta;
                for (g, &xv) in gw[c * self.dim..(c + 1) * self.dim].iter_mut().zip(x.iter()) {
                    *g += delta * xv as f64;
                }
            }
        }
        let inv = 1.0 / n;
        gw.iter_mut().zip(&self.weights).for_each(|(g, w)| *g = *g * inv + weight_decay * w);
        gb.iter_mut().zip(&self.bias).for_each(|(g, b)| *g = *g * inv + weight_decay * b);
        let sq: f64 = self.weights.iter().chain(&self.bias).map(|v| v * v).sum();
        (ce * inv + 0.5 * weight_decay * sq, Gradient { weights: gw, bias: gb })
    }

    /// Mutable access to the parameters as `(weights, bias)`.
    pub fn parameters_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }
}

impl Classifier for SoftmaxRegression {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn feature_dim(&self) -> usize {
        self.dim
    }

    fn predict_proba(&self, features: &[f32]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(features)?))
    }

    fn reset(&mut self) {
        self.weights.clone_from(&self.init_weights);
        self.bias.clone_from(&self.init_bias);
    }

    fn train(
        &mut self,
        features: &FeatureTable,
        labels: &BTreeMap<SampleId, ClassId>,
        config: &TrainConfig,
    ) -> Result<TrainReport> {
        config.validate().map_err(|e| Error::Training {
            step: 0,
            message: e.to_string(),
        })?;
        if labels.is_empty() {
            return Err(Error::Training {
                step: 0,
                message: "no labeled samples".into(),
            });
        }
        if features.dim() != self.dim {
            return Err(Error::config(format!(
                "features have {} dims, classifier expects {}",
                features.dim(),
                self.dim
            )));
        }
        if let Some((id, c)) = labels
            .iter()
            .find(|(&id, &c)| c >= self.classes || id >= features.len())
        {
            return Err(Error::validation(format!("training pair ({id}, {c}) is out of range")));
        }

        let mut order: Vec<(SampleId, ClassId)> = labels.iter().map(|(&i, &c)| (i, c)).collect();
        let mut vw = vec![0.0; self.weights.len()];
        let mut vb = vec![0.0; self.classes];
        let mut rng = rng::rng(config.seed);
        let mut steps = 0;
        let mut epoch_losses = Vec::with_capacity(config.epochs);
        let mut rows = Vec::with_capacity(config.batch_size);
        let mut ys = Vec::with_capacity(config.batch_size);

        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(config.batch_size) {
                rows.clear();
                ys.clear();
                for &(id, c) in batch {
                    rows.push(features.row(id));
                    ys.push(c);
                }
                let (loss, grad) = self.loss_and_gradient(&rows, &ys, config.weight_decay);
                steps += 1;
                if !loss.is_finite() {
                    return Err(Error::Training {
                        step: steps,
                        message: format!("loss became {loss}"),
                    });
                }
                epoch_loss += loss * batch.len() as f64;
                for ((p, v), g) in self.weights.iter_mut().zip(&mut vw).zip(&grad.weights) {
                    *v = config.momentum * *v - config.learning_rate * g;
                    *p += *v;
                }
                for ((p, v), g) in self.bias.iter_mut().zip(&mut vb).zip(&grad.bias) {
                    *v = config.momentum * *v - config.learning_rate * g;
                    *p += *v;
                }
                if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
                    return Err(Error::Training {
                        step: steps,
                        message: "parameters became non-finite".into(),
                    });
                }
            }
            epoch_losses.push(epoch_loss / order.len() as f64);
        }
        Ok(TrainReport { steps, epoch_losses })
    }
}
