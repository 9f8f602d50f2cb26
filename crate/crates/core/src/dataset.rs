//! Immutable sample table.
//!
//! A [`Dataset`] is split into two halves with deliberately different reach:
//! the [`FeatureTable`] is what acquisition, clustering and training see, and
//! the [`GroundTruth`] is handed only to the expert and to metric computation.
//! Code that scores or trains takes a `&FeatureTable`, so it cannot read a
//! label nobody has paid for.

use crate::error::{Error, Result};

pub type SampleId = usize;
pub type ClassId = usize;

/// Largest class count representable in the on-disk label encoding.
pub const MAX_CLASSES: usize = u16::MAX as usize + 1;

/// One sample, used when building or comparing datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: SampleId,
    pub features: Vec<f32>,
    pub true_label: ClassId,
    pub thumbnail_uri: Option<String>,
}

/// Row-major feature matrix plus optional per-sample thumbnail URIs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    num_classes: usize,
    data: Vec<f32>,
    thumbnails: Option<Vec<String>>,
}

impl FeatureTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of classes the classifier must distinguish. Class *names* are
    /// public knowledge; which sample has which class is not.
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, id: SampleId) -> &[f32] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn thumbnail(&self, id: SampleId) -> Option<&str> {
        self.thumbnails.as_ref().map(|t| t[id].as_str())
    }

    pub fn has_thumbnails(&self) -> bool {
        self.thumbnails.is_some()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// Hidden labels. Only the simulated expert and the metric code read these.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    labels: Vec<u16>,
}

impl GroundTruth {
    #[inline]
    pub fn label(&self, id: SampleId) -> ClassId {
        self.labels[id] as ClassId
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.labels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: FeatureTable,
    truth: GroundTruth,
}

impl Dataset {
    /// Builds a dataset from a flat row-major feature buffer.
    ///
    /// Fails if the dataset is empty, if any feature is non-finite, or if a
    /// label is outside `[0, num_classes)`.
    pub fn new(
        feature_dim: usize,
        num_classes: usize,
        features: Vec<f32>,
        labels: Vec<u16>,
        thumbnails: Option<Vec<String>>,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::config("feature_dim must be positive"));
        }
        if num_classes == 0 || num_classes > MAX_CLASSES {
            return Err(Error::config(format!(
                "num_classes must be in 1..={MAX_CLASSES}, got {num_classes}"
            )));
        }
        if labels.is_empty() {
            return Err(Error::config("dataset has no samples"));
        }
        if features.len() != labels.len() * feature_dim {
            return Err(Error::config(format!(
                "feature buffer holds {} values, expected {} samples x {} dims",
                features.len(),
                labels.len(),
                feature_dim
            )));
        }
        if let Some(row) = features
            .chunks_exact(feature_dim)
            .position(|r| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::validation(format!("non-finite feature in row {row}")));
        }
        if let Some(row) = labels.iter().position(|&l| l as usize >= num_classes) {
            return Err(Error::validation(format!(
                "label {} in row {row} is outside [0, {num_classes})",
                labels[row]
            )));
        }
        if let Some(t) = &thumbnails {
            if t.len() != labels.len() {
                return Err(Error::config(format!(
                    "thumbnail manifest has {} entries for {} samples",
                    t.len(),
                    labels.len()
                )));
            }
        }
        Ok(Self {
            features: FeatureTable {
                dim: feature_dim,
                num_classes,
                data: features,
                thumbnails,
            },
            truth: GroundTruth { labels },
        })
    }

    /// Builds a dataset from owned samples. Ids must be `0..n` in order.
    pub fn from_samples(feature_dim: usize, num_classes: usize, samples: Vec<Sample>) -> Result<Self> {
        let mut features = Vec::with_capacity(samples.len() * feature_dim);
        let mut labels = Vec::with_capacity(samples.len());
        let any_thumb = samples.iter().any(|s| s.thumbnail_uri.is_some());
        let mut thumbs = any_thumb.then(|| Vec::with_capacity(samples.len()));
        for (i, s) in samples.into_iter().enumerate() {
            if s.id != i {
                return Err(Error::validation(format!("sample at position {i} has id {}", s.id)));
            }
            if s.features.len() != feature_dim {
                return Err(Error::validation(format!(
                    "sample {i} has {} features, expected {feature_dim}",
                    s.features.len()
                )));
            }
            if s.true_label >= num_classes {
                return Err(Error::validation(format!(
                    "label {} in row {i} is outside [0, {num_classes})",
                    s.true_label
                )));
            }
            features.extend_from_slice(&s.features);
            labels.push(s.true_label as u16);
            if let Some(t) = thumbs.as_mut() {
                t.push(s.thumbnail_uri.unwrap_or_default());
            }
        }
        Self::new(feature_dim, num_classes, features, labels, thumbs)
    }

    /// Concatenates two datasets with matching shapes; ids of `other` are shifted by `self.len()`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.feature_dim() != other.feature_dim() || self.num_classes() != other.num_classes() {
            return Err(Error::config(format!(
                "cannot join datasets of shape (d={}, C={}) and (d={}, C={})",
                self.feature_dim(),
                self.num_classes(),
                other.feature_dim(),
                other.num_classes()
            )));
        }
        let mut features = self.features.data.clone();
        features.extend_from_slice(&other.features.data);
        let mut labels = self.truth.labels.clone();
        labels.extend_from_slice(&other.truth.labels);
        let thumbs = match (&self.features.thumbnails, &other.features.thumbnails) {
            (None, None) => None,
            (a, b) => {
                let mut t = a.clone().unwrap_or_else(|| vec![String::new(); self.len()]);
                t.extend(b.clone().unwrap_or_else(|| vec![String::new(); other.len()]));
                Some(t)
            }
        };
        Dataset::new(self.feature_dim(), self.num_classes(), features, labels, thumbs)
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.dim
    }

    pub fn num_classes(&self) -> usize {
        self.features.num_classes
    }

    pub fn ids(&self) -> std::ops::Range<SampleId> {
        0..self.len()
    }

    pub fn features(&self) -> &FeatureTable {
        &self.features
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn sample(&self, id: SampleId) -> Sample {
        Sample {
            id,
            features: self.features.row(id).to_vec(),
            true_label: self.truth.label(id),
            thumbnail_uri: self.features.thumbnail(id).map(str::to_owned),
        }
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.truth.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}
