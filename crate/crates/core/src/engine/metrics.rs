use serde::{Deserialize, Serialize};

use super::config::Scenario;

/// What one iteration produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    /// 1-based.
    pub iteration: usize,
    pub test_accuracy: f64,
    /// Fraction of cluster-labeled samples whose assigned class is wrong.
    pub cluster_label_error_rate: f64,
    /// Training set size: individually plus cluster-labeled samples.
    pub total_annotated: usize,
    pub individually_labeled: usize,
    pub cluster_labeled: usize,
    pub interactions: u64,
    pub cumulative_interactions: u64,
    pub clusters_presented: usize,
    pub clusters_labeled: usize,
    pub clusters_skipped: usize,
    /// Final-epoch training objective; absent when there was nothing to train on.
    pub train_loss: Option<f64>,
}

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scenario: Scenario,
    pub repeat: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: IterationMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); zero for a single repeat.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Per-iteration mean and spread across repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub iteration: usize,
    pub test_accuracy: MeanStd,
    pub cluster_label_error_rate: MeanStd,
    pub total_annotated: MeanStd,
    pub cumulative_interactions: MeanStd,
}

/// Aggregates equally long series; iteration `i` of every repeat forms one row.
pub fn aggregate(series: &[Vec<IterationMetrics>]) -> Vec<AggregateRow> {
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let pick = |f: fn(&IterationMetrics) -> f64| -> MeanStd {
                MeanStd::of(&series.iter().map(|s| f(&s[i])).collect::<Vec<_>>())
            };
            AggregateRow {
                iteration: series[0][i].iteration,
                test_accuracy: pick(|m| m.test_accuracy),
                cluster_label_error_rate: pick(|m| m.cluster_label_error_rate),
                total_annotated: pick(|m| m.total_annotated as f64),
                cumulative_interactions: pick(|m| m.cumulative_interactions as f64),
            }
        })
        .collect()
}
