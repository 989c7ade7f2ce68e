//! K-means clustering with k-means++ seeding, BIC selection of k, and
//! cross-tick identity matching of clusters.

mod bic;
mod kmeans;
mod matching;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::ExecMode;

pub use bic::{bic, bic_score, select_k, KRange};
pub use kmeans::{kmeans_fit, kmeans_restarts, kmeans_single, LloydRun};
pub use matching::{hungarian, match_clusters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("empty feature matrix")]
    EmptyMatrix,
    #[error("k = {k} invalid for {n} points")]
    InvalidK { k: usize, n: usize },
    #[error("BIC needs more points ({n}) than clusters ({k})")]
    TooFewPoints { n: usize, k: usize },
}

/// Tunables shared by every fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub n_init: usize,
    pub max_iter: usize,
    /// Convergence threshold on the largest centroid movement.
    pub tol: f64,
    pub exec: ExecMode,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { n_init: 10, max_iter: 100, tol: 1e-6, exec: ExecMode::default() }
    }
}

/// A fitted partition of a feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub dim: usize,
    /// Row-major `k × dim` centroids, in the space of the fitted matrix.
    pub centroids: Vec<f64>,
    /// Cluster index per matrix row.
    pub assignments: Vec<usize>,
    pub wcss: f64,
    /// `None` when undefined (`n ≤ k`).
    pub bic: Option<f64>,
    pub seed: u64,
    pub iterations_run: usize,
    /// Set when the matrix was too small for a BIC search.
    pub degraded: bool,
}

impl ClusterModel {
    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid by squared Euclidean distance; ties go to
/// the lowest index.
pub fn assign(centroids: &[f64], dim: usize, point: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_distance(c, point);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}
