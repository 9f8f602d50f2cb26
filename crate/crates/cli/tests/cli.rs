use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use alca::ingest::load_embeddings;

fn alca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alca")).args(args).output().expect("spawn alca")
}

fn small_run(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--scenario",
        "cluster-only",
        "--iterations",
        "2",
        "--interactions-per-iter",
        "5",
        "--seed",
        "3",
        "--set",
        "data.synthetic.num_classes=3",
        "--set",
        "data.synthetic.feature_dim=4",
        "--set",
        "data.synthetic.samples_per_class=40",
        "--out",
    ];
    let out = out.to_str().unwrap();
    args.push(out);
    args.extend_from_slice(extra);
    alca(&args)
}

#[test]
fn run_writes_one_record_per_iteration_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = small_run(&a, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(small_run(&b, &[]).status.success());

    let metrics = fs::read_to_string(a.join("metrics.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = metrics.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 2);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r["scenario"], "cluster-only");
        assert_eq!(r["iteration"], i as u64 + 1);
        assert_eq!(r["cumulative_interactions"], 5 * (i as u64 + 1));
        assert_eq!(r["seed"], 3);
    }
    for name in ["metrics.jsonl", "events.jsonl", "summary.txt"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert!(fs::read_to_string(a.join("summary.txt")).unwrap().contains("cluster-only"));
}

#[test]
fn run_reads_a_config_file_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "scenarios = [\"uncertain-only\", \"cluster+uncertain\"]\n\
         [data.synthetic]\nnum_classes = 3\nfeature_dim = 4\nsamples_per_class = 30\n\
         [experiment]\niterations = 4\ninteractions_per_iteration = 6\nrepeats = 2\n",
    )
    .unwrap();
    let out_dir = dir.path().join("o");
    let out = alca(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--iterations",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let n = fs::read_to_string(out_dir.join("metrics.jsonl")).unwrap().lines().count();
    assert_eq!(n, 2 * 3 * 2);
    let resolved = fs::read_to_string(out_dir.join("config.toml")).unwrap();
    assert!(resolved.contains("iterations = 3"));
}

#[test]
fn unknown_scenario_is_a_usage_error_listing_the_choices() {
    let dir = tempfile::tempdir().unwrap();
    let out = alca(&["run", "--scenario", "active", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["random", "uncertain-only", "cluster-only", "uncertain+cluster", "cluster+uncertain"] {
        assert!(err.contains(name), "{err}");
    }
    assert!(!dir.path().join("metrics.jsonl").exists());
}

#[test]
fn bad_arguments_exit_with_two() {
    assert_eq!(alca(&["run", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(alca(&["run", "--threshold", "1.5"]).status.code(), Some(2));
    assert_eq!(alca(&["run", "--set", "experiment.nonsense=1"]).status.code(), Some(2));
    assert_eq!(alca(&["run", "--data", "/definitely/not/here.alce"]).status.code(), Some(2));
    assert_eq!(alca(&["synth", "--overlap", "1.0", "--out", "/tmp/x"]).status.code(), Some(2));
    assert_eq!(alca(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn count_skipped_clusters_flag_accepts_a_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), &["--count-skipped-clusters=false", "--threshold", "1.0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let resolved = fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(resolved.contains("count_skipped_clusters = false"));
}

#[test]
fn synth_is_deterministic_and_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.alce"), dir.path().join("b.alce"));
    let args = |p: &Path| {
        let out = alca(&[
            "synth", "--classes", "10", "--dim", "512", "--per-class", "1000", "--seed", "9", "--out",
            p.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    args(&a);
    args(&b);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let ds = load_embeddings(&a).unwrap();
    assert_eq!(ds.len(), 10_000);
    assert_eq!(ds.feature_dim(), 512);
    assert_eq!(ds.class_counts(), vec![1000; 10]);

    let out = alca(&["inspect", a.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("samples:      10000"), "{text}");
    assert!(text.contains("thumbnails:   no"), "{text}");
}

#[test]
fn convert_turns_delimited_text_into_binary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("x.csv");
    fs::write(&csv, "0,1.5,2\n1,-1,0.25\n2,0,0\n").unwrap();
    let bin = dir.path().join("x.alce");
    let out = alca(&["convert", csv.to_str().unwrap(), bin.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ds = load_embeddings(&bin).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.features().row(1), &[-1.0, 0.25]);

    fs::write(&csv, "0,1\n1,oops\n").unwrap();
    let out = alca(&["convert", csv.to_str().unwrap(), bin.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn serve_refuses_a_missing_dataset() {
    let out = alca(&["serve", "--data", "/nope/missing.alce", "--bind", "127.0.0.1:0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn serve_answers_health_checks() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.alce");
    let out = alca(&[
        "synth", "--classes", "3", "--dim", "4", "--per-class", "20", "--out", data.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let mut child = Command::new(env!("CARGO_BIN_EXE_alca"))
        .args([
            "serve",
            "--data",
            data.to_str().unwrap(),
            "--bind",
            "127.0.0.1:0",
            "--journal-dir",
            dir.path().join("j").to_str().unwrap(),
        ])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let deadline = Instant::now() + Duration::from_secs(30);
    let addr = loop {
        assert!(Instant::now() < deadline, "server did not start");
        let line = lines.next().expect("server exited").unwrap();
        if let Some(a) = line.strip_prefix("listening on ") {
            break a.to_string();
        }
    };
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    let status = rt.block_on(async { reqwest::get(format!("{addr}/healthz")).await.unwrap().status() });
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(status.is_success());
}
