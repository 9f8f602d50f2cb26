//! The `alca` command line: experiment runs, synthetic data, format
//! conversion, dataset inspection and the annotation service.
//!
//! Exit codes: 0 on success, 2 for invalid arguments or configuration
//! (including data that cannot be loaded), 1 for failures while running.

mod output;
mod runfile;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use alca::engine::{run_experiment, Scenario};
use alca::ingest::{generate_synthetic, import_delimited, load_embeddings, read_header, save_embeddings, SyntheticSpec};
use alca::Dataset;
use clap::{Args, Parser, Subcommand};

pub use output::{format_summary, EventRecord, RunLog};
pub use runfile::{apply_override, load_data, DataSection, RunFile};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or input data: exit 2.
    Usage(String),
    /// Failure while executing: exit 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 1,
        }
    }

    pub fn usage(e: impl fmt::Display) -> Self {
        Self::Usage(e.to_string())
    }

    pub fn runtime(e: impl fmt::Display) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T = ()> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "alca", version, about = "Active learning with cluster annotation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run simulated experiments and write metrics.
    Run(RunArgs),
    /// Generate a synthetic Gaussian-blob dataset.
    Synth(SynthArgs),
    /// Start the HTTP annotation service.
    Serve(ServeArgs),
    /// Print header and class information of a dataset file.
    Inspect(InspectArgs),
    /// Convert delimited text (label, then features) to the binary format.
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Dataset file; without one a synthetic set is generated.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// One scenario, a comma-separated list, or "all".
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long = "interactions-per-iter")]
    pub interactions_per_iter: Option<usize>,
    /// "budget", "auto" or a fixed count.
    #[arg(long = "clusters-per-iter")]
    pub clusters_per_iter: Option<String>,
    /// Cluster consistency threshold of the simulated oracle.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long = "kmeans-iters")]
    pub kmeans_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long = "count-skipped-clusters", num_args = 0..=1, default_missing_value = "true")]
    pub count_skipped_clusters: Option<bool>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Any configuration key by dotted name, e.g. `experiment.train.learning_rate=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long = "per-class", default_value_t = 1000)]
    pub per_class: usize,
    #[arg(long = "center-scale", default_value_t = 4.0)]
    pub center_scale: f64,
    #[arg(long = "noise-sigma", default_value_t = 1.0)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub overlap: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML service configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Serve a single dataset file without a configuration file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long = "journal-dir")]
    pub journal_dir: Option<PathBuf>,
    /// Restart sessions found in the journal directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Defaults to the largest label plus one.
    #[arg(long = "num-classes")]
    pub num_classes: Option<usize>,
}

pub fn execute(cli: Cli) -> CliResult {
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Convert(a) => cmd_convert(a),
    }
}

/// Resolves the run configuration from the file, flags and `--set` overrides.
pub fn resolve_run_config(a: &RunArgs) -> CliResult<RunFile> {
    let mut table = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    let mut set = |key: &str, value: toml::Value| apply_override(&mut table, key, value);
    if let Some(p) = &a.data {
        set("data.path", toml::Value::String(p.display().to_string()))?;
    }
    if let Some(s) = &a.scenario {
        let names: Vec<toml::Value> = parse_scenarios(s)?
            .into_iter()
            .map(|sc| toml::Value::String(sc.name().into()))
            .collect();
        set("scenarios", toml::Value::Array(names))?;
    }
    if let Some(v) = a.iterations {
        set("experiment.iterations", int(v)?)?;
    }
    if let Some(v) = a.interactions_per_iter {
        set("experiment.interactions_per_iteration", int(v)?)?;
    }
    if let Some(v) = &a.clusters_per_iter {
        let value = match v.parse::<usize>() {
            Ok(n) => int(n)?,
            Err(_) => toml::Value::String(v.clone()),
        };
        set("experiment.clusters_per_iteration", value)?;
    }
    if let Some(v) = a.threshold {
        set("experiment.oracle.consistency_threshold", toml::Value::Float(v))?;
    }
    if let Some(v) = a.kmeans_iters {
        set("experiment.kmeans_iters", int(v)?)?;
    }
    if let Some(v) = a.seed {
        set("experiment.seed", int(v)?)?;
    }
    if let Some(v) = a.repeats {
        set("experiment.repeats", int(v)?)?;
    }
    if let Some(v) = a.count_skipped_clusters {
        set("experiment.count_skipped_clusters", toml::Value::Boolean(v))?;
    }
    if let Some(p) = &a.out {
        set("out", toml::Value::String(p.display().to_string()))?;
    }
    for kv in &a.set {
        let (key, raw) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        set(key.trim(), runfile::parse_value(raw.trim()))?;
    }
    let file: RunFile = table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Usage(format!("invalid configuration: {}", e.message())))?;
    file.validate().map_err(CliError::usage)?;
    Ok(file)
}

fn int<T: TryInto<i64>>(v: T) -> CliResult<toml::Value> {
    v.try_into()
        .map(toml::Value::Integer)
        .map_err(|_| CliError::Usage("value out of range".into()))
}

pub fn parse_scenarios(s: &str) -> CliResult<Vec<Scenario>> {
    if s.trim() == "all" {
        return Ok(Scenario::ALL.to_vec());
    }
    s.split(',')
        .map(|p| p.trim().parse::<Scenario>().map_err(CliError::usage))
        .collect()
}

fn cmd_run(a: RunArgs) -> CliResult {
    let file = resolve_run_config(&a)?;
    let (dataset, splits) = load_data(&file.data).map_err(CliError::usage)?;
    fs::create_dir_all(&file.out).map_err(|e| CliError::Runtime(format!("{}: {e}", file.out.display())))?;
    let mut log = RunLog::create(&file.out.join("run.log")).map_err(CliError::runtime)?;
    log.line(&format!(
        "dataset: {} samples, {} features, {} classes; train {} / test {}",
        dataset.len(),
        dataset.feature_dim(),
        dataset.num_classes(),
        splits.train.len(),
        splits.test.len()
    ));
    let resolved = toml::to_string(&file).map_err(CliError::runtime)?;
    fs::write(file.out.join("config.toml"), resolved).map_err(CliError::runtime)?;

    let mut metrics = String::new();
    let mut events = String::new();
    let mut results = Vec::new();
    for scenario in file.scenario_list() {
        let config = file.experiment_for(scenario);
        log.line(&format!("scenario {scenario}: {} repeats of {} iterations", config.repeats, config.iterations));
        let result = run_experiment(&config, &dataset, &splits).map_err(CliError::runtime)?;
        for record in result.records(config.seed) {
            metrics.push_str(&serde_json::to_string(&record).map_err(CliError::runtime)?);
            metrics.push('\n');
        }
        for (repeat, evs) in result.events.iter().enumerate() {
            for event in evs {
                let rec = EventRecord { scenario, repeat, event: event.clone() };
                events.push_str(&serde_json::to_string(&rec).map_err(CliError::runtime)?);
                events.push('\n');
            }
        }
        log.line(&format!("scenario {scenario}: done"));
        results.push(result);
    }
    let summary = format_summary(&results);
    let write = |name: &str, body: &str| {
        fs::write(file.out.join(name), body).map_err(|e| CliError::Runtime(format!("{name}: {e}")))
    };
    write("metrics.jsonl", &metrics)?;
    write("events.jsonl", &events)?;
    write("summary.txt", &summary)?;
    log.line("finished");
    print!("{summary}");
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CliResult {
    let spec = SyntheticSpec {
        num_classes: a.classes,
        feature_dim: a.dim,
        samples_per_class: a.per_class,
        center_scale: a.center_scale,
        noise_sigma: a.noise_sigma,
        overlap_fraction: a.overlap,
        seed: a.seed,
    };
    spec.validate().map_err(CliError::usage)?;
    let data = generate_synthetic(&spec).map_err(CliError::runtime)?;
    save_embeddings(&data, &a.out).map_err(|e| CliError::Runtime(format!("{}: {e}", a.out.display())))?;
    println!("wrote {} samples to {}", data.len(), a.out.display());
    Ok(())
}

fn read_dataset(path: &Path) -> alca::Result<Dataset> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv" | "tsv" | "txt") => import_delimited(path, None),
        _ => load_embeddings(path),
    }
}

fn cmd_inspect(a: InspectArgs) -> CliResult {
    let is_binary = !matches!(a.path.extension().and_then(|e| e.to_str()), Some("csv" | "tsv" | "txt"));
    if is_binary {
        let h = read_header(&a.path).map_err(|e| CliError::Runtime(format!("{}: {e}", a.path.display())))?;
        println!("format:       ALCE v{}", h.version);
        println!("samples:      {}", h.n_samples);
        println!("feature_dim:  {}", h.feature_dim);
        println!("num_classes:  {}", h.num_classes);
        println!("thumbnails:   {}", if h.has_thumbnails() { "yes" } else { "no" });
        println!("file bytes:   {}", h.file_len());
    }
    let data = read_dataset(&a.path).map_err(|e| CliError::Runtime(format!("{}: {e}", a.path.display())))?;
    if !is_binary {
        println!("format:       delimited text");
        println!("samples:      {}", data.len());
        println!("feature_dim:  {}", data.feature_dim());
        println!("num_classes:  {}", data.num_classes());
    }
    println!("class counts:");
    for (c, n) in data.class_counts().into_iter().enumerate() {
        println!("  {c:>5}  {n}");
    }
    Ok(())
}

fn cmd_convert(a: ConvertArgs) -> CliResult {
    let data = import_delimited(&a.input, a.num_classes)
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.input.display())))?;
    save_embeddings(&data, &a.output).map_err(|e| CliError::Runtime(format!("{}: {e}", a.output.display())))?;
    println!("wrote {} samples to {}", data.len(), a.output.display());
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> CliResult {
    let mut config = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            toml::from_str::<alca_serve::ServeConfig>(&text)
                .map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.message())))?
        }
        None => alca_serve::ServeConfig::default(),
    };
    if let Some(p) = a.data {
        config.datasets.push(alca_serve::DatasetSource {
            name: "default".into(),
            path: p,
            test_path: None,
            test_fraction: 0.2,
            split_seed: 0,
            class_names: Vec::new(),
        });
    }
    if let Some(b) = a.bind {
        config.bind = b;
    }
    if let Some(j) = a.journal_dir {
        config.journal_dir = j;
    }
    config.validate().map_err(CliError::usage)?;
    let datasets = config.load_datasets().map_err(CliError::usage)?;
    let state = alca_serve::AppState::new(datasets, alca_serve::ServerOptions::from_config(&config))
        .map_err(CliError::runtime)?;
    let state = Arc::new(state);
    if a.resume {
        let n = state.resume().map_err(CliError::runtime)?;
        eprintln!("resumed {n} sessions");
    }
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::runtime)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&config.bind)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind {}: {e}", config.bind)))?;
        let addr = listener.local_addr().map_err(CliError::runtime)?;
        eprintln!("listening on http://{addr}");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            eprintln!("shutting down");
        };
        alca_serve::serve(listener, state, shutdown).await.map_err(CliError::runtime)
    })
}
