//! Core-network recommendation per cluster: nearest registry anchor by
//! great-circle distance, with relative hysteresis against flapping.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::projection::EARTH_RADIUS_M;
use crate::EpochSeconds;

pub const DEFAULT_HYSTERESIS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreNetwork {
    pub id: String,
    pub name: String,
    pub anchor_lat: f64,
    pub anchor_lon: f64,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("registry has no entries")]
    Empty,
    #[error("duplicate network id {0:?}")]
    DuplicateId(String),
    #[error("network {0:?} has an invalid anchor")]
    BadAnchor(String),
    #[error("hysteresis {0} outside [0, 1)")]
    BadHysteresis(f64),
    #[error("cannot read registry: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid registry JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreNetworkRegistry {
    entries: Vec<CoreNetwork>,
    hysteresis: f64,
}

impl CoreNetworkRegistry {
    pub fn new(entries: Vec<CoreNetwork>, hysteresis: f64) -> Result<Self, RegistryError> {
        if entries.is_empty() {
            return Err(RegistryError::Empty);
        }
        if !(0.0..1.0).contains(&hysteresis) {
            return Err(RegistryError::BadHysteresis(hysteresis));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(RegistryError::DuplicateId(e.id.clone()));
            }
            if !(-90.0..=90.0).contains(&e.anchor_lat) || !(-180.0..=180.0).contains(&e.anchor_lon) {
                return Err(RegistryError::BadAnchor(e.id.clone()));
            }
        }
        Ok(CoreNetworkRegistry { entries, hysteresis })
    }

    /// Parses a JSON array of `{id, name, anchor_lat, anchor_lon}`.
    pub fn from_json(text: &str, hysteresis: f64) -> Result<Self, RegistryError> {
        Self::new(serde_json::from_str(text)?, hysteresis)
    }

    pub fn load(path: impl AsRef<Path>, hysteresis: f64) -> Result<Self, RegistryError> {
        Self::from_json(&std::fs::read_to_string(path)?, hysteresis)
    }

    /// Demo registry with three UK anchors.
    pub fn uk_default() -> Self {
        let anchor = |id: &str, name: &str, lat, lon| CoreNetwork {
            id: id.into(),
            name: name.into(),
            anchor_lat: lat,
            anchor_lon: lon,
        };
        Self::new(
            vec![
                anchor("lon", "London", 51.5074, -0.1278),
                anchor("man", "Manchester", 53.4808, -2.2426),
                anchor("edi", "Edinburgh", 55.9533, -3.1883),
            ],
            DEFAULT_HYSTERESIS,
        )
        .expect("static registry is valid")
    }

    pub fn entries(&self) -> &[CoreNetwork] {
        &self.entries
    }

    pub fn hysteresis(&self) -> f64 {
        self.hysteresis
    }

    pub fn get(&self, id: &str) -> Option<&CoreNetwork> {
        self.entries.iter().find(|e| e.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentroidGeo {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub cluster_identity: u64,
    pub network_id: String,
    pub centroid_geo: CentroidGeo,
    pub distance_m: f64,
    pub tick_time: EpochSeconds,
    pub switched: bool,
}

/// Haversine distance in meters on a sphere of radius 6 371 000 m.
pub fn great_circle(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = (lat2 - lat1).to_radians();
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Picks the core network for one cluster.
///
/// The candidate is the nearest anchor (ties to the smallest id). With a
/// previous recommendation whose network is still registered, the cluster
/// switches only if `d_candidate < (1 − h)·d_previous`.
pub fn recommend(
    cluster_identity: u64,
    centroid: CentroidGeo,
    registry: &CoreNetworkRegistry,
    previous: Option<&Recommendation>,
    tick_time: EpochSeconds,
) -> Recommendation {
    let distance = |n: &CoreNetwork| great_circle(centroid.lat, centroid.lon, n.anchor_lat, n.anchor_lon);
    let (best, best_d) = registry
        .entries()
        .iter()
        .map(|n| (n, distance(n)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.id.cmp(&b.0.id)))
        .expect("registry is non-empty");
    let kept = previous.and_then(|p| registry.get(&p.network_id)).and_then(|prev| {
        let prev_d = distance(prev);
        let switch = prev.id != best.id && best_d < (1.0 - registry.hysteresis()) * prev_d;
        (!switch).then_some((prev, prev_d))
    });
    let (network, distance_m, switched) = match kept {
        Some((prev, d)) => (prev, d, false),
        None => (best, best_d, previous.is_some_and(|p| p.network_id != best.id)),
    };
    Recommendation {
        cluster_identity,
        network_id: network.id.clone(),
        centroid_geo: centroid,
        distance_m,
        tick_time,
        switched,
    }
}
