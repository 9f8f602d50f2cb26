use std::path::PathBuf;
use std::time::Duration;

use alca::engine::Splits;
use alca::ingest::{import_delimited, load_embeddings};
use alca::{Dataset, Error, Result};
use serde::{Deserialize, Serialize};

use crate::projection::project_2d;

/// Service configuration, usually read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: String,
    pub journal_dir: PathBuf,
    pub answer_timeout_secs: u64,
    pub retry_after_ms: u64,
    pub datasets: Vec<DatasetSource>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            journal_dir: PathBuf::from("journal"),
            answer_timeout_secs: 24 * 3600,
            retry_after_ms: 500,
            datasets: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    pub name: String,
    /// An `ALCE` file, or delimited text when the extension is csv, tsv or txt.
    pub path: PathBuf,
    /// Separate test set; otherwise `test_fraction` of `path` is held out.
    #[serde(default)]
    pub test_path: Option<PathBuf>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub class_names: Vec<String>,
}

fn default_test_fraction() -> f64 {
    0.2
}

impl ServeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("at least one dataset is required".into()));
        }
        if self.answer_timeout_secs == 0 {
            return Err(Error::Config("answer_timeout_secs must be positive".into()));
        }
        let mut names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("dataset names must be unique".into()));
        }
        for d in &self.datasets {
            if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) && d.test_path.is_none() {
                return Err(Error::Config(format!("dataset {}: test_fraction must be in (0, 1)", d.name)));
            }
        }
        Ok(())
    }

    pub fn answer_timeout(&self) -> Duration {
        Duration::from_secs(self.answer_timeout_secs)
    }

    pub fn load_datasets(&self) -> Result<Vec<LoadedDataset>> {
        self.datasets.iter().map(DatasetSource::load).collect()
    }
}

fn read_any(path: &std::path::Path) -> Result<Dataset> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "csv" | "tsv" | "txt" => import_delimited(path, None),
        _ => load_embeddings(path),
    }
}

impl DatasetSource {
    pub fn load(&self) -> Result<LoadedDataset> {
        let train = read_any(&self.path)?;
        let (dataset, splits) = match &self.test_path {
            Some(test) => {
                let test = read_any(test)?;
                let n = train.len();
                let all = train.concat(&test)?;
                let splits = Splits::head_tail(all.len(), n)?;
                (all, splits)
            }
            None => {
                let n = train.len();
                let test_count = ((n as f64 * self.test_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
                let splits = Splits::random(n, test_count, self.split_seed)?;
                (train, splits)
            }
        };
        LoadedDataset::new(&self.name, dataset, splits, self.class_names.clone())
    }
}

/// A dataset ready to back sessions.
#[derive(Debug)]
pub struct LoadedDataset {
    pub name: String,
    pub dataset: Dataset,
    pub splits: Splits,
    pub class_names: Vec<String>,
    pub projection: Vec<[f32; 2]>,
}

impl LoadedDataset {
    /// `class_names` may be empty, in which case classes are named by index.
    pub fn new(name: &str, dataset: Dataset, splits: Splits, class_names: Vec<String>) -> Result<Self> {
        let c = dataset.num_classes();
        let class_names = if class_names.is_empty() {
            (0..c).map(|i| i.to_string()).collect()
        } else if class_names.len() == c {
            class_names
        } else {
            return Err(Error::Config(format!(
                "dataset {name}: {} class names for {c} classes",
                class_names.len()
            )));
        };
        let splits = Splits::new(splits.train, splits.test, dataset.len())?;
        Ok(Self {
            name: name.to_owned(),
            projection: project_2d(dataset.features()),
            dataset,
            splits,
            class_names,
        })
    }
}
