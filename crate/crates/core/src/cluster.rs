//! Lloyd's k-means with k-means++ seeding over a subset of the feature table.
//!
//! The input id list is sorted and deduplicated before anything else happens,
//! so the result depends on the *set* of ids, not on the order the caller
//! passed them in.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureTable, SampleId};
use crate::error::{Error, Result};
use crate::rng;

/// Default Lloyd iteration cap.
pub const DEFAULT_KMEANS_ITERS: usize = 40;

/// Average cluster size targeted by [`default_cluster_count`].
pub const TARGET_CLUSTER_SIZE: usize = 75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Scale every feature vector to unit L2 norm before clustering.
    pub normalize: bool,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iters: DEFAULT_KMEANS_ITERS,
            seed,
            normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub centroids: Vec<Vec<f64>>,
    /// Member sample ids per cluster, ascending. May contain empty lists only
    /// when the input has fewer distinct points than `k`.
    pub members: Vec<Vec<SampleId>>,
    /// Sum of squared distances from every point to its assigned centroid.
    pub inertia: f64,
    /// Inertia after the seeding assignment and after every accepted Lloyd step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub normalized: bool,
}

impl ClusterAssignment {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Cluster index of every member, as `(sample id, cluster)` pairs sorted by id.
    pub fn labels(&self) -> Vec<(SampleId, usize)> {
        let mut out: Vec<_> = self
            .members
            .iter()
            .enumerate()
            .flat_map(|(c, m)| m.iter().map(move |&id| (id, c)))
            .collect();
        out.sort_unstable();
        out
    }
}

/// Heuristic cluster count that yields clusters of roughly
/// [`TARGET_CLUSTER_SIZE`] samples.
pub fn default_cluster_count(n_unlabeled: usize) -> usize {
    n_unlabeled.div_ceil(TARGET_CLUSTER_SIZE).max(1)
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn nearest(centroids: &[Vec<f64>], point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, point);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Index of the centroid closest to `point` (squared Euclidean). Ties go to
/// the smallest index.
pub fn assign_nearest(centroids: &[Vec<f64>], point: &[f64]) -> Result<usize> {
    if centroids.is_empty() {
        return Err(Error::config("assign_nearest needs at least one centroid"));
    }
    if let Some(c) = centroids.iter().find(|c| c.len() != point.len()) {
        return Err(Error::config(format!(
            "centroid has {} dims, point has {}",
            c.len(),
            point.len()
        )));
    }
    Ok(nearest(centroids, point).0)
}

/// Feature rows for `ids`, widened to f64 and optionally unit-normalized.
pub(crate) fn gather(features: &FeatureTable, ids: &[SampleId], normalize: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(ids.len() * features.dim());
    for &id in ids {
        let row = features.row(id);
        let start = out.len();
        out.extend(row.iter().map(|&v| v as f64));
        if normalize {
            let norm = out[start..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                out[start..].iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
    out
}

struct Lloyd<'a> {
    points: &'a [f64],
    dim: usize,
}

impl Lloyd<'_> {
    fn n(&self) -> usize {
        self.points.len() / self.dim
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn seed_plus_plus(&self, k: usize, rng: &mut rng::Rng) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut centroids = Vec::with_capacity(k);
        let mut chosen = vec![false; n];
        let first = rng.random_range(0..n);
        chosen[first] = true;
        centroids.push(self.point(first).to_vec());
        let mut min_d: Vec<f64> = self
            .points
            .par_chunks_exact(self.dim)
            .map(|p| sq_dist(p, &centroids[0]))
            .collect();
        while centroids.len() < k {
            let total: f64 = min_d.iter().sum();
            let next = if total > 0.0 {
                let target = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = None;
                for (i, &d) in min_d.iter().enumerate() {
                    acc += d;
                    if d > 0.0 && acc > target {
                        pick = Some(i);
                        break;
                    }
                }
                // Rounding can leave `target` just past the final partial sum.
                pick.unwrap_or_else(|| min_d.iter().rposition(|&d| d > 0.0).expect("total > 0"))
            } else {
                // Every remaining point coincides with a centroid.
                chosen.iter().position(|c| !c).unwrap_or(0)
            };
            chosen[next] = true;
            let c = self.point(next).to_vec();
            min_d
                .par_iter_mut()
                .zip(self.points.par_chunks_exact(self.dim))
                .for_each(|(m, p)| *m = m.min(sq_dist(p, &c)));
            centroids.push(c);
        }
        centroids
    }

    fn assign(&self, centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, f64) {
        let (labels, dists): (Vec<usize>, Vec<f64>) = self
            .points
            .par_chunks_exact(self.dim)
            .map(|p| nearest(centroids, p))
            .unzip();
        let inertia = dists.iter().sum();
        (labels, dists, inertia)
    }

    /// Recomputes means; an emptied cluster is moved onto the point farthest
    /// from its own centroid.
    fn update(&self, k: usize, labels: &[usize], dists: &[f64]) -> Vec<Vec<f64>> {
        let mut sums = vec![vec![0.0; self.dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(self.point(i)) {
                *s += v;
            }
        }
        let mut taken = vec![false; labels.len()];
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                sums[c].iter_mut().for_each(|s| *s *= inv);
                continue;
            }
            let far = dists
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken[*i])
                .fold(None, |best: Option<(usize, f64)>, (i, &d)| match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                });
            if let Some((i, _)) = far {
                taken[i] = true;
                sums[c] = self.point(i).to_vec();
            }
        }
        sums
    }
}

/// Clusters the feature rows of `ids` into at most `config.k` groups.
///
/// `k` is clamped to the number of distinct ids. Iteration stops as soon as
/// an update leaves every assignment unchanged, or after `max_iters` updates.
/// The returned centroids are always the ones the members are nearest to.
pub fn kmeans(features: &FeatureTable, ids: &[SampleId], config: &KMeansConfig) -> Result<ClusterAssignment> {
    if config.k == 0 {
        return Err(Error::config("k must be positive"));
    }
    if config.max_iters == 0 {
        return Err(Error::config("max_iters must be positive"));
    }
    let mut ids = ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Err(Error::config("cannot cluster an empty id set"));
    }
    if let Some(&bad) = ids.iter().find(|&&id| id >= features.len()) {
        return Err(Error::config(format!("sample id {bad} is out of range")));
    }
    let k = config.k.min(ids.len());
    let points = gather(features, &ids, config.normalize);
    let lloyd = Lloyd {
        points: &points,
        dim: features.dim(),
    };
    let mut rng = rng::rng(config.seed);

    let mut centroids = lloyd.seed_plus_plus(k, &mut rng);
    let (mut labels, mut dists, mut inertia) = lloyd.assign(&centroids);
    let mut history = vec![inertia];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        let next = lloyd.update(k, &labels, &dists);
        let (next_labels, next_dists, next_inertia) = lloyd.assign(&next);
        iterations += 1;
        if next_inertia > inertia {
            // Only reachable through floating-point rounding; keep the last
            // consistent (centroids, assignment) pair.
            break;
        }
        let changed = next_labels != labels;
        centroids = next;
        labels = next_labels;
        dists = next_dists;
        inertia = next_inertia;
        history.push(inertia);
        if !changed {
            converged = true;
            break;
        }
    }

    let mut members = vec![Vec::new(); k];
    for (&id, &c) in ids.iter().zip(&labels) {
        members[c].push(id);
    }
    Ok(ClusterAssignment {
        centroids,
        members,
        inertia,
        inertia_history: history,
        iterations,
        converged,
        normalized: config.normalize,
    })
}

/// Up to `m` members of `cluster`, nearest to its centroid first (ties by id).
pub fn representatives(
    assignment: &ClusterAssignment,
    features: &FeatureTable,
    cluster: usize,
    m: usize,
) -> Result<Vec<SampleId>> {
    let Some(members) = assignment.members.get(cluster) else {
        return Err(Error::config(format!(
            "cluster {cluster} out of range (k = {})",
            assignment.k()
        )));
    };
    if m == 0 {
        return Err(Error::config("representative count must be positive"));
    }
    let centroid = &assignment.centroids[cluster];
    let points = gather(features, members, assignment.normalized);
    let mut scored: Vec<(f64, SampleId)> = members
        .iter()
        .zip(points.chunks_exact(features.dim()))
        .map(|(&id, p)| (sq_dist(p, centroid), id))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(m).map(|(_, id)| id).collect())
}
