//! Position feature matrix and min-max scaling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::projection::ProjectedState;

/// Feature columns: longitude (deg), latitude (deg), altitude (m).
pub const FEATURE_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("no eligible aircraft for clustering")]
    EmptyMatrix,
    #[error("column count mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Row-major matrix with one labelled row per aircraft.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    dim: usize,
    keys: Vec<String>,
}

impl FeatureMatrix {
    /// Builds a matrix from rows of equal length. Keys default to the row
    /// index when not given.
    pub fn from_rows(rows: &[Vec<f64>], keys: Option<Vec<String>>) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == dim), "ragged feature rows");
        let keys = keys.unwrap_or_else(|| (0..rows.len()).map(|i| i.to_string()).collect());
        assert_eq!(keys.len(), rows.len());
        FeatureMatrix { data: rows.concat(), dim, keys }
    }

    pub fn from_flat(data: Vec<f64>, dim: usize, keys: Vec<String>) -> Self {
        assert!(dim > 0 && data.len() == dim * keys.len());
        FeatureMatrix { data, dim, keys }
    }

    pub fn rows(&self) -> usize {
        self.keys.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.iter_rows().map(move |r| r[j])
    }
}

/// Whether a projected aircraft takes part in clustering.
pub fn is_clusterable(s: &ProjectedState) -> bool {
    !s.stale && !s.base.on_ground
}

/// One row per non-stale airborne aircraft, sorted by icao24.
pub fn extract_features(states: &[ProjectedState]) -> Result<FeatureMatrix, FeatureError> {
    let mut eligible: Vec<&ProjectedState> = states.iter().filter(|s| is_clusterable(s)).collect();
    if eligible.is_empty() {
        return Err(FeatureError::EmptyMatrix);
    }
    eligible.sort_by(|a, b| a.icao24().cmp(b.icao24()));
    let mut data = Vec::with_capacity(eligible.len() * FEATURE_DIM);
    let mut keys = Vec::with_capacity(eligible.len());
    for s in eligible {
        data.extend_from_slice(&[s.longitude, s.latitude, s.altitude]);
        keys.push(s.icao24().to_string());
    }
    Ok(FeatureMatrix { data, dim: FEATURE_DIM, keys })
}

/// Per-column range in raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_minmax(m: &FeatureMatrix) -> Result<ScalerParams, FeatureError> {
    if m.is_empty() {
        return Err(FeatureError::EmptyMatrix);
    }
    let mut min = m.row(0).to_vec();
    let mut max = min.clone();
    for row in m.iter_rows().skip(1) {
        for (j, &x) in row.iter().enumerate() {
            min[j] = min[j].min(x);
            max[j] = max[j].max(x);
        }
    }
    Ok(ScalerParams { min, max })
}

impl ScalerParams {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Maps one raw row into the unit cube. Zero-range columns map to 0.
    pub fn scale_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &x)| {
                let range = self.max[j] - self.min[j];
                if range > 0.0 {
                    (x - self.min[j]) / range
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Maps a scaled row back to raw units.
    pub fn unscale_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(j, &x)| self.min[j] + x * (self.max[j] - self.min[j])).collect()
    }
}

pub fn transform(params: &ScalerParams, m: &FeatureMatrix) -> Result<FeatureMatrix, FeatureError> {
    if params.dim() != m.dim() {
        return Err(FeatureError::DimensionMismatch { expected: params.dim(), got: m.dim() });
    }
    let data = m.iter_rows().flat_map(|r| params.scale_row(r)).collect();
    Ok(FeatureMatrix { data, dim: m.dim, keys: m.keys.clone() })
}
