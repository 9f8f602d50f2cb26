use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use alca::engine::{Event, ExperimentResult, Scenario};
use serde::Serialize;

/// One line of `events.jsonl`.
#[derive(Debug, Clone, Serialize)]
pub struct EventRecord {
    pub scenario: Scenario,
    pub repeat: usize,
    #[serde(flatten)]
    pub event: Event,
}

/// Timestamped progress log, kept apart from the deterministic outputs.
pub struct RunLog {
    file: File,
}

impl RunLog {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(Self { file: File::create(path)? })
    }

    pub fn line(&mut self, message: &str) {
        let ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        let _ = writeln!(self.file, "[{ms}] {message}");
        eprintln!("{message}");
    }
}

/// Aligned per-iteration table of mean ± std over repeats, one block per scenario.
pub fn format_summary(results: &[ExperimentResult]) -> String {
    let mut out = String::new();
    for r in results {
        let repeats = r.series.len();
        let _ = writeln!(out, "scenario: {} ({} repeat{})", r.scenario, repeats, if repeats == 1 { "" } else { "s" });
        let _ = writeln!(
            out,
            "{:>5}  {:>22}  {:>20}  {:>20}  {:>22}",
            "iter", "interactions", "test_accuracy", "label_error_rate", "total_annotated"
        );
        for row in &r.aggregate {
            let _ = writeln!(
                out,
                "{:>5}  {:>22}  {:>20}  {:>20}  {:>22}",
                row.iteration,
                format!("{:.1} ± {:.1}", row.cumulative_interactions.mean, row.cumulative_interactions.std),
                format!("{:.4} ± {:.4}", row.test_accuracy.mean, row.test_accuracy.std),
                format!("{:.4} ± {:.4}", row.cluster_label_error_rate.mean, row.cluster_label_error_rate.std),
                format!("{:.1} ± {:.1}", row.total_annotated.mean, row.total_annotated.std),
            );
        }
        out.push('\n');
    }
    out
}
