use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{assign, bic, squared_distance, ClusterError, ClusterModel, KMeansConfig};
use crate::exec::mix_seed;
use crate::features::FeatureMatrix;

/// One seeded Lloyd run and its objective after every iteration.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub model: ClusterModel,
    /// WCSS after each assignment step, then the final value.
    pub wcss_history: Vec<f64>,
}

/// k-means++ seeding: first centroid uniform, each next one drawn with
/// probability proportional to the squared distance to the closest chosen
/// centroid. Falls back to a uniform draw once every point coincides with a
/// centroid.
fn init_plus_plus(m: &FeatureMatrix, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = m.rows();
    let mut centroids = Vec::with_capacity(k * m.dim());
    centroids.extend_from_slice(m.row(rng.random_range(0..n)));
    let mut nearest: Vec<f64> = m.iter_rows().map(|r| squared_distance(r, &centroids[..m.dim()])).collect();
    for _ in 1..k {
        let next = match WeightedIndex::new(&nearest) {
            Ok(dist) => dist.sample(rng),
            Err(_) => rng.random_range(0..n),
        };
        let start = centroids.len();
        centroids.extend_from_slice(m.row(next));
        let c = centroids[start..].to_vec();
        for (d, r) in nearest.iter_mut().zip(m.iter_rows()) {
            *d = d.min(squared_distance(r, &c));
        }
    }
    centroids
}

fn assign_all(m: &FeatureMatrix, centroids: &[f64], labels: &mut [usize]) {
    for (label, row) in labels.iter_mut().zip(m.iter_rows()) {
        *label = assign(centroids, m.dim(), row);
    }
}

fn wcss_of(m: &FeatureMatrix, centroids: &[f64], labels: &[usize]) -> f64 {
    let dim = m.dim();
    m.iter_rows().zip(labels).map(|(r, &j)| squared_distance(r, &centroids[j * dim..(j + 1) * dim])).sum()
}

/// Gives every empty cluster the point farthest from its own centroid,
/// taken from a cluster that keeps at least one member.
fn repair_empty(m: &FeatureMatrix, k: usize, centroids: &mut [f64], labels: &mut [usize]) {
    let dim = m.dim();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, r) in m.iter_rows().enumerate() {
            let l = labels[i];
            if sizes[l] <= 1 {
                continue;
            }
            let d = squared_distance(r, &centroids[l * dim..(l + 1) * dim]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("k <= n leaves a donor cluster");
        centroids[j * dim..(j + 1) * dim].copy_from_slice(m.row(i));
        sizes[labels[i]] -= 1;
        labels[i] = j;
        sizes[j] = 1;
    }
}

fn means(m: &FeatureMatrix, k: usize, labels: &[usize]) -> Vec<f64> {
    let dim = m.dim();
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (r, &j) in m.iter_rows().zip(labels) {
        counts[j] += 1;
        for (s, x) in sums[j * dim..(j + 1) * dim].iter_mut().zip(r) {
            *s += x;
        }
    }
    for (j, &c) in counts.iter().enumerate() {
        debug_assert!(c > 0, "cluster {j} empty after repair");
        for s in &mut sums[j * dim..(j + 1) * dim] {
            *s /= c as f64;
        }
    }
    sums
}

fn check_k(m: &FeatureMatrix, k: usize) -> Result<(), ClusterError> {
    if m.is_empty() {
        return Err(ClusterError::EmptyMatrix);
    }
    if k == 0 || k > m.rows() {
        return Err(ClusterError::InvalidK { k, n: m.rows() });
    }
    Ok(())
}

/// A single Lloyd run from k-means++ seeding with the given RNG seed.
pub fn kmeans_single(
    m: &FeatureMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<LloydRun, ClusterError> {
    check_k(m, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = init_plus_plus(m, k, &mut rng);
    let mut labels = vec![0usize; m.rows()];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter {
        assign_all(m, &centroids, &mut labels);
        repair_empty(m, k, &mut centroids, &mut labels);
        history.push(wcss_of(m, &centroids, &labels));
        let updated = means(m, k, &labels);
        let shift = updated
            .chunks_exact(m.dim())
            .zip(centroids.chunks_exact(m.dim()))
            .map(|(a, b)| squared_distance(a, b))
            .fold(0.0, f64::max)
            .sqrt();
        centroids = updated;
        iterations += 1;
        if shift < tol {
            break;
        }
    }
    // Final assignment against the converged centroids, then snap the
    // centroids onto the means of their members.
    assign_all(m, &centroids, &mut labels);
    repair_empty(m, k, &mut centroids, &mut labels);
    let centroids = means(m, k, &labels);
    let wcss = wcss_of(m, &centroids, &labels);
    history.push(wcss);
    Ok(LloydRun {
        model: ClusterModel {
            k,
            dim: m.dim(),
            centroids,
            assignments: labels,
            wcss,
            bic: None,
            seed,
            iterations_run: iterations,
            degraded: false,
        },
        wcss_history: history,
    })
}

/// All `n_init` seeded restarts for one k, in restart order.
pub fn kmeans_restarts(
    m: &FeatureMatrix,
    k: usize,
    seed: u64,
    config: &KMeansConfig,
) -> Result<Vec<LloydRun>, ClusterError> {
    check_k(m, k)?;
    config
        .exec
        .map_range(config.n_init.max(1), |r| {
            kmeans_single(m, k, mix_seed(seed, k as u64, r as u64), config.max_iter, config.tol)
        })
        .into_iter()
        .collect()
}

/// Best of `n_init` seeded restarts by WCSS (earliest restart on ties).
pub fn kmeans_fit(m: &FeatureMatrix, k: usize, seed: u64, config: &KMeansConfig) -> Result<ClusterModel, ClusterError> {
    let runs = kmeans_restarts(m, k, seed, config)?;
    let mut best = runs
        .into_iter()
        .map(|r| r.model)
        .reduce(|best, cand| if cand.wcss < best.wcss { cand } else { best })
        .expect("at least one restart");
    best.seed = seed;
    best.bic = bic(m, &best).ok();
    Ok(best)
}
