use std::path::PathBuf;

use alca::engine::{ExperimentConfig, Scenario, Splits};
use alca::ingest::{generate_synthetic, import_delimited, load_embeddings, SyntheticSpec};
use alca::{Dataset, Error, Result};
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

/// Contents of a run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunFile {
    pub out: PathBuf,
    /// Scenarios to run; empty means `experiment.scenario` alone.
    pub scenarios: Vec<Scenario>,
    pub data: DataSection,
    pub experiment: ExperimentConfig,
}

impl Default for RunFile {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            scenarios: Vec::new(),
            data: DataSection::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Dataset file; when absent, `synthetic` is generated.
    pub path: Option<PathBuf>,
    /// Separate test file; otherwise `test_fraction` of `path` is held out.
    pub test_path: Option<PathBuf>,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub synthetic: SyntheticSpec,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: None,
            test_path: None,
            test_fraction: 0.2,
            split_seed: 0,
            synthetic: SyntheticSpec::default(),
        }
    }
}

impl RunFile {
    pub fn scenario_list(&self) -> Vec<Scenario> {
        if self.scenarios.is_empty() {
            vec![self.experiment.scenario]
        } else {
            self.scenarios.clone()
        }
    }

    pub fn experiment_for(&self, scenario: Scenario) -> ExperimentConfig {
        ExperimentConfig {
            scenario,
            ..self.experiment.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        if !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            return Err(Error::Config("data.test_fraction must be in (0, 1)".into()));
        }
        if self.data.path.is_none() {
            self.data.synthetic.validate()?;
        }
        Ok(())
    }
}

fn read_any(path: &std::path::Path) -> Result<Dataset> {
    let r = match path.extension().and_then(|e| e.to_str()) {
        Some("csv" | "tsv" | "txt") => import_delimited(path, None),
        _ => load_embeddings(path),
    };
    r.map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("{}: {io}", path.display())),
        other => other,
    })
}

/// Loads (or generates) the dataset and its train/test split.
pub fn load_data(section: &DataSection) -> Result<(Dataset, Splits)> {
    let data = match &section.path {
        Some(p) => read_any(p)?,
        None => generate_synthetic(&section.synthetic)?,
    };
    match &section.test_path {
        Some(t) => {
            let test = read_any(t)?;
            let n = data.len();
            let all = data.concat(&test)?;
            let splits = Splits::head_tail(all.len(), n)?;
            Ok((all, splits))
        }
        None => {
            let n = data.len();
            if n < 2 {
                return Err(Error::Config("need at least two samples to hold out a test set".into()));
            }
            let test = ((n as f64 * section.test_fraction).round() as usize).clamp(1, n - 1);
            let splits = Splits::random(n, test, section.split_seed)?;
            Ok((data, splits))
        }
    }
}

/// Parses a command-line value as a TOML value, falling back to a plain string.
pub fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Sets `key` (dotted path) in `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, key: &str, value: toml::Value) -> CliResult {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad configuration key {key:?}")));
    }
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("configuration key {p:?} in {key:?} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
