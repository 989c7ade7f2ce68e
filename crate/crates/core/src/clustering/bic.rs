use serde::{Deserialize, Serialize};

use super::{kmeans_fit, ClusterError, ClusterModel, KMeansConfig};
use crate::features::FeatureMatrix;

const WCSS_FLOOR: f64 = 1e-12;

/// BIC of a hard k-means partition under an identity-covariance Gaussian
/// mixture with a pooled variance (the x-means form). Lower is better.
///
/// `-2·LL + k·(d+1)·ln n`, where
/// `LL = Σ n_j ln(n_j/n) − (n·d/2)·ln(2π σ²) − d·(n−k)/2` and
/// `σ² = max(wcss, 1e-12) / (d·(n−k))`.
pub fn bic_score(n: usize, dim: usize, k: usize, wcss: f64, sizes: &[usize]) -> Result<f64, ClusterError> {
    if n <= k {
        return Err(ClusterError::TooFewPoints { n, k });
    }
    let (nf, df, kf) = (n as f64, dim as f64, k as f64);
    let variance = wcss.max(WCSS_FLOOR) / (df * (nf - kf));
    let mixing: f64 = sizes.iter().filter(|&&s| s > 0).map(|&s| s as f64 * (s as f64 / nf).ln()).sum();
    let log_likelihood = mixing - 0.5 * nf * df * (2.0 * std::f64::consts::PI * variance).ln() - 0.5 * df * (nf - kf);
    let parameters = kf * (df + 1.0);
    Ok(-2.0 * log_likelihood + parameters * nf.ln())
}

pub fn bic(m: &FeatureMatrix, model: &ClusterModel) -> Result<f64, ClusterError> {
    bic_score(m.rows(), m.dim(), model.k, model.wcss, &model.cluster_sizes())
}

/// Inclusive search range for k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KRange {
    pub min: usize,
    pub max: usize,
}

impl Default for KRange {
    fn default() -> Self {
        KRange { min: 2, max: 10 }
    }
}

impl KRange {
    /// The range intersected with `[1, n−1]`; `None` if nothing remains
    /// searchable (`n ≤ 2` with the default range, or a misordered range).
    pub fn clamp_to(self, n: usize) -> Option<KRange> {
        if n < 2 || self.min > self.max {
            return None;
        }
        let max = self.max.min(n - 1);
        let min = self.min.max(1);
        (min <= max).then_some(KRange { min, max })
    }
}

/// Fits every k in `range` and returns the BIC minimizer, ties going to the
/// smaller k.
///
/// With `n ≤ 2` points, or a range that does not intersect `[1, n−1]`, the
/// result is a single-cluster model flagged `degraded`.
pub fn select_k(
    m: &FeatureMatrix,
    range: KRange,
    seed: u64,
    config: &KMeansConfig,
) -> Result<ClusterModel, ClusterError> {
    if m.is_empty() {
        return Err(ClusterError::EmptyMatrix);
    }
    let clamped = if m.rows() <= 2 { None } else { range.clamp_to(m.rows()) };
    let Some(range) = clamped else {
        let mut model = kmeans_fit(m, 1, seed, config)?;
        model.degraded = true;
        return Ok(model);
    };
    let ks: Vec<usize> = (range.min..=range.max).collect();
    let fits = config.exec.map(&ks, |&k| kmeans_fit(m, k, seed, config));
    let mut best: Option<ClusterModel> = None;
    for fit in fits {
        let model = fit?;
        let score = model.bic.expect("k < n");
        if best.as_ref().is_none_or(|b| score < b.bic.expect("k < n")) {
            best = Some(model);
        }
    }
    Ok(best.expect("non-empty k range"))
}
