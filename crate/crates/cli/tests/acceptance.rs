//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails. Runtime limits are part of each criterion.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use alca::cluster::{kmeans, KMeansConfig};
use alca::engine::{supervised_accuracy, run_experiment, ExperimentConfig, NullSink, Run, Scenario, Splits};
use alca::ingest::{generate_synthetic, SyntheticSpec};
use alca::model::{entropy, softmax};
use alca::oracle::annotate_cluster;
use alca::{ClusterDecision, Dataset, OracleConfig, PoolState, SimulatedExpert, SoftmaxRegression};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_dataset(r: &mut ChaCha8Rng, n: usize, d: usize, classes: usize) -> Dataset {
    let features = (0..n * d).map(|_| r.random_range(-5.0f32..5.0)).collect();
    let labels = (0..n).map(|_| r.random_range(0..classes) as u16).collect();
    Dataset::new(d, classes, features, labels, None).unwrap()
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let t = start.elapsed();
    if t > limit {
        Err(format!("took {:.1?}, limit {:?}", t, limit))
    } else {
        Ok(t)
    }
}

// ---------------------------------------------------------------- pool

#[derive(Debug, Clone)]
enum Op {
    Label(Vec<(usize, usize)>),
    Cluster(Vec<usize>, usize),
    Reset,
}

/// Plain-set model of the three disjoint pools.
#[derive(Default)]
struct PoolModel {
    u: BTreeSet<usize>,
    l: BTreeMap<usize, usize>,
    cl: BTreeMap<usize, usize>,
}

impl PoolModel {
    fn apply(&mut self, op: &Op) -> bool {
        let movable = |ids: &[usize], u: &BTreeSet<usize>| {
            ids.iter().collect::<BTreeSet<_>>().len() == ids.len() && ids.iter().all(|i| u.contains(i))
        };
        match op {
            Op::Label(batch) => {
                let ids: Vec<usize> = batch.iter().map(|p| p.0).collect();
                if !movable(&ids, &self.u) {
                    return false;
                }
                for &(id, c) in batch {
                    self.u.remove(&id);
                    self.l.insert(id, c);
                }
            }
            Op::Cluster(ids, c) => {
                if !movable(ids, &self.u) {
                    return false;
                }
                for &id in ids {
                    self.u.remove(&id);
                    self.cl.insert(id, *c);
                }
            }
            Op::Reset => {
                self.u.extend(self.cl.keys());
                self.cl.clear();
            }
        }
        true
    }
}

fn random_op(r: &mut ChaCha8Rng, n: usize) -> Op {
    match r.random_range(0..3) {
        0 => Op::Label((0..r.random_range(0..6)).map(|_| (r.random_range(0..n + 3), r.random_range(0..5))).collect()),
        1 => Op::Cluster((0..r.random_range(0..8)).map(|_| r.random_range(0..n + 3)).collect(), r.random_range(0..5)),
        _ => Op::Reset,
    }
}

fn pool_invariants() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut ops_applied = 0usize;
    for seq in 0..10_000 {
        let n = r.random_range(1..40);
        let universe: BTreeSet<usize> = (0..n).collect();
        let mut pool = PoolState::from_ids(0..n).unwrap();
        let mut model = PoolModel { u: universe.clone(), ..Default::default() };
        for _ in 0..r.random_range(0..30) {
            let op = random_op(&mut r, n);
            let before = pool.clone();
            let ok = match &op {
                Op::Label(b) => pool.move_to_labeled(b).is_ok(),
                Op::Cluster(ids, c) => pool.move_to_cluster_labeled(ids, *c).is_ok(),
                Op::Reset => {
                    pool.reset_cluster_labels();
                    true
                }
            };
            ensure!(ok == model.apply(&op), "sequence {seq}: {op:?} accepted={ok}, model disagrees");
            ensure!(ok || pool == before, "sequence {seq}: rejected {op:?} changed the pool");
            ensure!(pool.check_partition(Some(&universe)).is_ok(), "sequence {seq}: partition broken");
            ensure!(
                pool.unlabeled() == &model.u && pool.labeled() == &model.l && pool.cluster_labeled() == &model.cl,
                "sequence {seq}: pool diverged from model after {op:?}"
            );
            ensure!(
                pool.unlabeled().len() + pool.labeled().len() + pool.cluster_labeled().len() == n,
                "sequence {seq}: sample count not conserved"
            );
            ensure!(
                before.labeled().keys().all(|id| pool.labeled().contains_key(id)),
                "sequence {seq}: a labeled sample left the labeled set"
            );
            ops_applied += 1;
        }
    }

    let mut r = rng(2);
    let data = random_dataset(&mut r, 200, 4, 3);
    let splits = Splits::random(data.len(), 40, 0).unwrap();
    let universe: BTreeSet<usize> = splits.train.iter().copied().collect();
    for scenario in Scenario::ALL {
        let config = ExperimentConfig {
            scenario,
            iterations: 4,
            interactions_per_iteration: 10,
            ..Default::default()
        };
        let mut run = Run::with_default_model(&data, &splits, config, 0).unwrap();
        let mut expert = SimulatedExpert::new(data.truth(), Default::default());
        for it in 1..=4 {
            run.run_iteration(&mut expert, &mut NullSink).map_err(|e| e.to_string())?;
            ensure!(run.pool().cluster_labeled().is_empty(), "{scenario} iteration {it}: cluster-labeled set not empty");
            ensure!(run.pool().check_partition(Some(&universe)).is_ok(), "{scenario} iteration {it}: partition broken");
        }
    }
    let t = within(Duration::from_secs(10), start)?;
    Ok(format!("10000 sequences, {ops_applied} operations, 5 scenarios x 4 iterations, {t:.1?}"))
}

// ---------------------------------------------------------------- oracle

fn oracle_bound() -> Outcome {
    let start = Instant::now();
    let mut r = rng(3);
    let mut labeled = [0usize; 3];
    for case in 0..1000 {
        let n = r.random_range(1..150);
        let classes = r.random_range(1..7);
        // skew toward one class so every threshold sees both outcomes
        let dominant = r.random_range(0..classes);
        let p = r.random_range(0.0..1.0);
        let labels: Vec<usize> = (0..n)
            .map(|_| if r.random_bool(p) { dominant } else { r.random_range(0..classes) })
            .collect();
        let mut previous: Option<ClusterDecision> = None;
        for (slot, tenths) in [5usize, 8, 10].into_iter().enumerate() {
            let theta = tenths as f64 / 10.0;
            let d = annotate_cluster(&labels, &OracleConfig { consistency_threshold: theta }).map_err(|e| e.to_string())?;
            if let ClusterDecision::Label(c) = d {
                let wrong = labels.iter().filter(|&&l| l != c).count();
                // wrong / n <= 1 - theta, compared in integers
                ensure!(10 * wrong <= (10 - tenths) * n, "case {case}: theta {theta}, {wrong}/{n} mislabeled");
                labeled[slot] += 1;
                // a higher threshold labels only clusters a lower one labeled, with the same class
                if let Some(prev) = &previous {
                    ensure!(*prev == ClusterDecision::Label(c), "case {case}: monotonicity broken at theta {theta}");
                }
            }
            previous = Some(d);
        }
    }
    ensure!(labeled.iter().all(|&k| k > 0 && k < 1000), "degenerate sample: labeled counts {labeled:?}");
    let t = within(Duration::from_secs(5), start)?;
    Ok(format!("1000 clusters, labeled at 0.5/0.8/1.0: {labeled:?}, {t:.1?}"))
}

// ---------------------------------------------------------------- numerics

fn numerics() -> Outcome {
    let h = entropy(&[0.1; 10]).map_err(|e| e.to_string())?;
    ensure!((h - 10f64.ln()).abs() <= 1e-9, "uniform-10 entropy {h}");
    let mut onehot = vec![0.0; 10];
    onehot[3] = 1.0;
    let h0 = entropy(&onehot).map_err(|e| e.to_string())?;
    ensure!(h0 == 0.0, "one-hot entropy {h0}");
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let c = r.random_range(2..16);
        let logits: Vec<f64> = (0..c).map(|_| r.random_range(-1e4..=1e4)).collect();
        let p = softmax(&logits);
        ensure!(p.iter().all(|v| v.is_finite() && *v >= 0.0), "non-finite softmax for {logits:?}");
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    for edge in [vec![1e4, -1e4], vec![-1e4, -1e4, -1e4], vec![1e4; 5]] {
        let p = softmax(&edge);
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    ensure!(worst <= 1e-9, "softmax sums off by {worst:e}");
    Ok(format!("|H-ln10|={:.1e}, max |sum-1|={worst:.1e}", (h - 10f64.ln()).abs()))
}

// ---------------------------------------------------------------- gradients

/// Objective from its definition: mean cross-entropy plus wd/2 times the squared norm of all parameters.
fn objective(w: &[f64], b: &[f64], d: usize, rows: &[Vec<f32>], ys: &[usize], wd: f64) -> f64 {
    let c = b.len();
    let mut ce = 0.0;
    for (x, &y) in rows.iter().zip(ys) {
        let z: Vec<f64> = (0..c).map(|k| b[k] + (0..d).map(|j| w[k * d + j] * x[j] as f64).sum::<f64>()).collect();
        let lse = z.iter().map(|v| v.exp()).sum::<f64>().ln();
        ce += lse - z[y];
    }
    let sq: f64 = w.iter().chain(b).map(|v| v * v).sum();
    ce / rows.len() as f64 + 0.5 * wd * sq
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut r = rng(5);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for case in 0..100 {
        let d = r.random_range(1..=5);
        let c = r.random_range(2..=4);
        let n = r.random_range(1..10);
        let wd = if case % 2 == 0 { 0.0 } else { r.random_range(0.0..0.1) };
        let w: Vec<f64> = (0..d * c).map(|_| r.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..c).map(|_| r.random_range(-1.0..1.0)).collect();
        let rows: Vec<Vec<f32>> = (0..n).map(|_| (0..d).map(|_| r.random_range(-2.0f32..2.0)).collect()).collect();
        let ys: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
        let model = SoftmaxRegression::from_parameters(d, c, w.clone(), b.clone()).map_err(|e| e.to_string())?;
        let refs: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
        let (_, grad) = model.loss_and_gradient(&refs, &ys, wd);
        let analytic: Vec<f64> = grad.weights.iter().chain(&grad.bias).copied().collect();
        let step = 1e-5;
        for (i, &g) in analytic.iter().enumerate() {
            let (mut wp, mut bp, mut wm, mut bm) = (w.clone(), b.clone(), w.clone(), b.clone());
            if i < w.len() {
                wp[i] += step;
                wm[i] -= step;
            } else {
                bp[i - w.len()] += step;
                bm[i - w.len()] -= step;
            }
            let fd = (objective(&wp, &bp, d, &rows, &ys, wd) - objective(&wm, &bm, d, &rows, &ys, wd)) / (2.0 * step);
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-3);
            ensure!(rel <= 1e-5, "case {case} parameter {i}: analytic {g}, finite difference {fd}");
            worst = worst.max(rel);
            checked += 1;
        }
    }
    let t = within(Duration::from_secs(10), start)?;
    Ok(format!("100 instances, {checked} partials, worst relative error {worst:.1e}, {t:.1?}"))
}

// ---------------------------------------------------------------- k-means

fn kmeans_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(6);
    for case in 0..50u64 {
        let n = r.random_range(1..=500);
        let d = r.random_range(1..=16);
        let k = r.random_range(1..=10);
        let data = random_dataset(&mut r, n, d, 1);
        let ids: Vec<usize> = (0..n).collect();
        let a = kmeans(data.features(), &ids, &KMeansConfig::new(k, case)).map_err(|e| e.to_string())?;
        let total: usize = a.members.iter().map(Vec::len).sum();
        ensure!(total == n, "case {case}: {total} of {n} points assigned");
        for (c, members) in a.members.iter().enumerate() {
            for &id in members {
                let x = data.features().row(id);
                let dist = |cen: &[f64]| cen.iter().zip(x).map(|(m, &v)| (m - v as f64).powi(2)).sum::<f64>();
                let own = dist(&a.centroids[c]);
                for (o, cen) in a.centroids.iter().enumerate() {
                    let other = dist(cen);
                    ensure!(own < other || (own == other && c <= o), "case {case}: point {id} in {c} but nearer {o}");
                }
            }
        }
        ensure!(!a.inertia_history.is_empty(), "case {case}: no inertia recorded");
        for w in a.inertia_history.windows(2) {
            ensure!(w[1] <= w[0], "case {case}: inertia rose {:?}", a.inertia_history);
        }
    }
    let t = within(Duration::from_secs(30), start)?;
    Ok(format!("50 instances, {t:.1?}"))
}

// ---------------------------------------------------------------- trend

const TREND_SEEDS: u64 = 5;
const TREND_N: usize = 200;
const TREND_T: usize = 10;

struct SeedTrend {
    target: f64,
    uncertain: Option<u64>,
    uncertain_spent: u64,
    reached: BTreeMap<Scenario, Option<u64>>,
    error: BTreeMap<Scenario, f64>,
}

fn trend_seed(seed: u64) -> Result<SeedTrend, String> {
    let spec = SyntheticSpec {
        num_classes: 10,
        feature_dim: 64,
        samples_per_class: 1200,
        center_scale: 2.0,
        noise_sigma: 0.5,
        overlap_fraction: 0.1,
        seed,
    };
    let data = generate_synthetic(&spec).map_err(|e| e.to_string())?;
    let splits = Splits::random(data.len(), 2000, seed).map_err(|e| e.to_string())?;
    ensure!(splits.train.len() == 10_000 && splits.test.len() == 2000, "bad split sizes");
    let base = ExperimentConfig {
        iterations: TREND_T,
        interactions_per_iteration: TREND_N,
        seed,
        ..Default::default()
    };
    let supervised = supervised_accuracy(&base, &data, &splits, 0).map_err(|e| e.to_string())?;
    let target = supervised - 0.02;

    let mut reached = BTreeMap::new();
    let mut error = BTreeMap::new();
    for scenario in [Scenario::ClusterOnly, Scenario::UncertainThenCluster, Scenario::ClusterThenUncertain] {
        let config = ExperimentConfig { scenario, ..base.clone() };
        let result = run_experiment(&config, &data, &splits).map_err(|e| e.to_string())?;
        let series = &result.series[0];
        reached.insert(scenario, series.iter().find(|m| m.test_accuracy >= target).map(|m| m.cumulative_interactions));
        let tail = &series[1..];
        error.insert(scenario, tail.iter().map(|m| m.cluster_label_error_rate).sum::<f64>() / tail.len() as f64);
    }

    // uncertain-only keeps going past T until it reaches the target or the pool runs dry
    let config = ExperimentConfig { scenario: Scenario::UncertainOnly, ..base.clone() };
    let mut run = Run::with_default_model(&data, &splits, config, 0).map_err(|e| e.to_string())?;
    let mut expert = SimulatedExpert::new(data.truth(), base.oracle);
    let mut uncertain = None;
    while !run.pool().unlabeled().is_empty() {
        let m = run.run_iteration(&mut expert, &mut NullSink).map_err(|e| e.to_string())?;
        if m.test_accuracy >= target {
            uncertain = Some(m.cumulative_interactions);
            break;
        }
    }
    Ok(SeedTrend {
        target,
        uncertain,
        uncertain_spent: run.interactions(),
        reached,
        error,
    })
}

fn trend() -> Outcome {
    let start = Instant::now();
    let mut seeds = Vec::new();
    for seed in 0..TREND_SEEDS {
        let s = trend_seed(seed)?;
        eprintln!(
            "    seed {seed}: target {:.4}, uncertain-only {:?} (spent {}), reached {:?}, error {:?}",
            s.target, s.uncertain, s.uncertain_spent, s.reached, s.error
        );
        seeds.push(s);
    }
    let mut summary = Vec::new();
    for scenario in [Scenario::ClusterOnly, Scenario::UncertainThenCluster, Scenario::ClusterThenUncertain] {
        let wins = seeds
            .iter()
            .filter(|s| match s.reached[&scenario] {
                // if uncertain-only never reached the target, what it spent is a lower bound on its need
                Some(x) => 4 * x <= s.uncertain.unwrap_or(s.uncertain_spent),
                None => false,
            })
            .count();
        summary.push(format!("{scenario} {wins}/{TREND_SEEDS}"));
        ensure!(wins >= 4, "{scenario} within 25% of uncertain-only cost in only {wins}/{TREND_SEEDS} seeds");
    }
    let mean = |sc: Scenario| seeds.iter().map(|s| s.error[&sc]).sum::<f64>() / seeds.len() as f64;
    let (uc, co) = (mean(Scenario::UncertainThenCluster), mean(Scenario::ClusterOnly));
    ensure!(uc <= co, "uncertain+cluster label error {uc:.4} exceeds cluster-only {co:.4}");
    let t = within(Duration::from_secs(600), start)?;
    Ok(format!("{}; label error u+c {uc:.4} <= c {co:.4}; {t:.0?}", summary.join(", ")))
}

// ---------------------------------------------------------------- cli runs

fn alca() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alca"))
}

fn cli_run(out: &Path, args: &[&str]) -> Result<(), String> {
    let o = alca()
        .arg("run")
        .args(args)
        .args([
            "--set",
            "data.synthetic.num_classes=4",
            "--set",
            "data.synthetic.feature_dim=8",
            "--set",
            "data.synthetic.samples_per_class=100",
            "--out",
        ])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(o.status.success(), "alca run failed: {}", String::from_utf8_lossy(&o.stderr));
    Ok(())
}

fn jsonl(path: &Path) -> Result<Vec<Value>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines().map(|l| serde_json::from_str(l).map_err(|e| e.to_string())).collect()
}

fn accounting() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (k, t) = (7u64, 5u64);
    let mut lines = Vec::new();
    // theta 1.0 forces skips, which must count as interactions too
    for theta in ["0.8", "1.0"] {
        let out = dir.path().join(theta);
        cli_run(
            &out,
            &[
                "--scenario",
                "cluster-only",
                "--clusters-per-iter",
                &k.to_string(),
                "--iterations",
                &t.to_string(),
                "--threshold",
                theta,
                "--count-skipped-clusters=true",
                "--seed",
                "11",
            ],
        )?;
        let records = jsonl(&out.join("metrics.jsonl"))?;
        ensure!(records.len() == t as usize, "{} metric records", records.len());
        let last = &records[records.len() - 1];
        ensure!(last["cumulative_interactions"] == k * t, "cumulative interactions {}", last["cumulative_interactions"]);

        // recount from the raw journal
        let mut per_iter: BTreeMap<u64, [u64; 3]> = BTreeMap::new();
        for e in jsonl(&out.join("events.jsonl"))? {
            let slot = match e["event"].as_str() {
                Some("cluster_labeled") => 0,
                Some("cluster_skipped") => 1,
                Some("sample_labeled") => 2,
                _ => continue,
            };
            per_iter.entry(e["iteration"].as_u64().unwrap_or(0)).or_default()[slot] += 1;
        }
        let mut skipped_total = 0;
        for rec in &records {
            let it = rec["iteration"].as_u64().unwrap_or(0);
            let [lab, skip, samples] = per_iter.get(&it).copied().unwrap_or_default();
            ensure!(lab + skip + samples == k, "theta {theta} iteration {it}: journal has {} interactions", lab + skip + samples);
            ensure!(rec["interactions"] == lab + skip + samples, "iteration {it}: counter {} vs journal", rec["interactions"]);
            ensure!(rec["clusters_labeled"] == lab && rec["clusters_skipped"] == skip, "iteration {it}: cluster counters differ");
            skipped_total += skip;
        }
        lines.push(format!("theta {theta}: {} interactions, {skipped_total} skipped", k * t));
    }
    Ok(lines.join("; "))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let args = [
        "--scenario",
        "all",
        "--iterations",
        "3",
        "--interactions-per-iter",
        "12",
        "--repeats",
        "2",
        "--seed",
        "42",
    ];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cli_run(&a, &args)?;
    cli_run(&b, &args)?;
    let ma = fs::read(a.join("metrics.jsonl")).map_err(|e| e.to_string())?;
    let mb = fs::read(b.join("metrics.jsonl")).map_err(|e| e.to_string())?;
    ensure!(!ma.is_empty() && ma == mb, "metrics records differ between runs");
    let records = ma.iter().filter(|&&c| c == b'\n').count();
    ensure!(records == 5 * 3 * 2, "{records} records");
    Ok(format!("{records} records, {} bytes identical", ma.len()))
}

// ---------------------------------------------------------------- service

struct ServerProcess(std::process::Child);

impl Drop for ServerProcess {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn service_contract() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("blobs.alce");
    let journal = dir.path().join("journal");
    let o = alca()
        .args(["synth", "--classes", "4", "--dim", "6", "--per-class", "40", "--seed", "2", "--out"])
        .arg(&data)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(o.status.success(), "synth failed");
    let mut child = alca()
        .args(["serve", "--bind", "127.0.0.1:0", "--data"])
        .arg(&data)
        .arg("--journal-dir")
        .arg(&journal)
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let stderr = child.stderr.take().ok_or("no stderr")?;
    let _guard = ServerProcess(child);
    let mut lines = BufReader::new(stderr).lines();
    let base = loop {
        let line = lines.next().ok_or("server exited before listening")?.map_err(|e| e.to_string())?;
        if let Some(a) = line.strip_prefix("listening on ") {
            break a.to_string();
        }
    };
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().map_err(|e| e.to_string())?;
    rt.block_on(drive_session(&base, &journal))
}

async fn drive_session(base: &str, journal: &Path) -> Outcome {
    let client = reqwest::Client::new();
    let get = |path: String| {
        let client = client.clone();
        async move {
            let r = client.get(format!("{base}{path}")).send().await.map_err(|e| e.to_string())?;
            let status = r.status().as_u16();
            Ok::<_, String>((status, r.json::<Value>().await.map_err(|e| e.to_string())?))
        }
    };
    let post = |path: String, body: Value| {
        let client = client.clone();
        async move {
            let r = client.post(format!("{base}{path}")).json(&body).send().await.map_err(|e| e.to_string())?;
            let status = r.status().as_u16();
            Ok::<_, String>((status, r.json::<Value>().await.map_err(|e| e.to_string())?))
        }
    };
    let next_task = |id: String| {
        let get = &get;
        async move {
            for _ in 0..4000 {
                let (status, body) = get(format!("/sessions/{id}/task")).await?;
                ensure!(status == 200, "task fetch returned {status}: {body}");
                if body["status"] == "training" {
                    tokio::time::sleep(Duration::from_millis(10)).await;
                    continue;
                }
                return Ok(body);
            }
            Err("no task became available".to_string())
        }
    };

    let (status, created) = post(
        "/sessions".into(),
        json!({ "config": { "scenario": "cluster+uncertain", "iterations": 1, "interactions_per_iteration": 4, "seed": 7 } }),
    )
    .await?;
    ensure!(status == 201, "create returned {status}: {created}");
    let id = created["id"].as_str().ok_or("no session id")?.to_string();
    let (_, m0) = get(format!("/sessions/{id}/metrics")).await?;
    let train_size = m0["counters"]["unlabeled"].as_u64().ok_or("no unlabeled counter")?;

    let mut script = Vec::new();
    let mut answered = Vec::new();
    for step in ["label", "skip", "sample", "sample"] {
        let body = next_task(id.clone()).await?;
        ensure!(body["status"] == "awaiting_answer", "expected a task, got {body}");
        let task = &body["task"];
        let kind = task["kind"].as_str().unwrap_or_default();
        let tid = task["id"].as_u64().ok_or("task without id")?;
        let answer = match (step, kind) {
            ("label", "cluster_review") => json!({ "decision": "label", "class": 1 }),
            ("skip", "cluster_review") => json!({ "decision": "skip" }),
            ("sample", "sample_label") => json!({ "decision": "label", "class": 2 }),
            _ => return Err(format!("step {step}: unexpected task kind {kind}")),
        };
        let (status, ack) = post(format!("/sessions/{id}/task/{tid}/answer"), answer).await?;
        ensure!(status == 200, "answer to {kind} returned {status}: {ack}");
        script.push(kind.to_string());
        answered.push(tid);
    }

    // answering an already resolved task is a conflict
    let (status, body) = post(format!("/sessions/{id}/task/{}/answer", answered[0]), json!({ "decision": "skip" })).await?;
    ensure!(status == 409 && body["code"] == "conflict", "stale answer returned {status}: {body}");

    let done = next_task(id.clone()).await?;
    ensure!(done["status"] == "finished", "expected finished, got {done}");
    let (status, metrics) = get(format!("/sessions/{id}/metrics")).await?;
    ensure!(status == 200, "metrics returned {status}");
    let counters = &metrics["counters"];
    ensure!(counters["interactions"] == 4, "interactions {}", counters["interactions"]);
    ensure!(metrics["series"].as_array().map(Vec::len) == Some(1), "series {}", metrics["series"]);

    // independent replay of the on-disk journal
    let events = jsonl(&journal.join(format!("{id}.jsonl")))?;
    let mut interactions = 0u64;
    let mut labeled = BTreeSet::new();
    let mut skipped = 0u64;
    for e in &events {
        match e["event"].as_str() {
            Some("sample_labeled") => {
                interactions += 1;
                labeled.insert(e["sample"].as_u64().ok_or("sample id")?);
            }
            Some("cluster_labeled") => interactions += 1,
            Some("cluster_skipped") => {
                interactions += 1;
                skipped += 1;
            }
            _ => {}
        }
    }
    ensure!(counters["interactions"] == interactions, "journal interactions {interactions}");
    ensure!(counters["labeled"] == labeled.len() as u64, "journal labeled {}", labeled.len());
    ensure!(counters["clusters_skipped"] == skipped, "journal skipped {skipped}");
    ensure!(counters["cluster_labeled"] == 0, "cluster labels survived the iteration");
    ensure!(counters["unlabeled"] == train_size - labeled.len() as u64, "unlabeled {}", counters["unlabeled"]);
    Ok(format!("{} answered, {} journal events, stale answer 409", script.join("/"), events.len()))
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("pool invariants", pool_invariants),
        ("oracle bound", oracle_bound),
        ("entropy/softmax numerics", numerics),
        ("gradient check", gradient_check),
        ("k-means oracle equivalence", kmeans_equivalence),
        ("trend reproduction", trend),
        ("interaction accounting", accounting),
        ("determinism", determinism),
        ("service contract", service_contract),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
