//! Read-only projections of twin state: the JSON snapshot view, GeoJSON and
//! CSV exports, and view reconstruction from the DT bucket.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::pipeline::{Latency, TwinSnapshot};
use crate::recommend::CentroidGeo;
use crate::store::{
    Bucket, FieldValue, LinePoint, Store, RECOMMENDATION_MEASUREMENT, TICK_MEASUREMENT, TWIN_MEASUREMENT,
};
use crate::{nanos_to_seconds, seconds_to_nanos, EpochSeconds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AircraftView {
    pub icao24: String,
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
    pub provenance: String,
    pub cluster: Option<usize>,
    pub cluster_identity: Option<u64>,
    pub recommendation_id: Option<String>,
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationView {
    pub network_id: String,
    pub distance_m: f64,
    pub switched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterView {
    pub identity: u64,
    pub centroid_geo: CentroidGeo,
    pub size: usize,
    pub recommendation: RecommendationView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotView {
    /// ISO-8601 UTC.
    pub tick_time: String,
    pub tick_epoch_s: EpochSeconds,
    pub provenance: String,
    pub degraded: bool,
    pub aircraft: Vec<AircraftView>,
    pub clusters: Vec<ClusterView>,
    /// Absent for views rebuilt from the store.
    pub latency: Option<Latency>,
}

pub fn iso8601(t: EpochSeconds) -> String {
    let nanos = seconds_to_nanos(t);
    DateTime::<Utc>::from_timestamp_nanos(nanos).to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

impl SnapshotView {
    pub fn from_snapshot(s: &TwinSnapshot) -> Self {
        let aircraft = s
            .records
            .iter()
            .map(|r| AircraftView {
                icao24: r.projected.icao24().to_string(),
                lat: r.projected.latitude,
                lon: r.projected.longitude,
                alt: r.projected.altitude,
                provenance: r.projected.provenance.as_str().to_string(),
                cluster: r.cluster,
                cluster_identity: r.cluster_identity,
                recommendation_id: r.recommendation_id.clone(),
                stale: r.projected.stale,
            })
            .collect();
        let sizes = s.model.as_ref().map(|m| m.cluster_sizes()).unwrap_or_default();
        let clusters = s
            .recommendations
            .iter()
            .enumerate()
            .map(|(j, rec)| ClusterView {
                identity: rec.cluster_identity,
                centroid_geo: rec.centroid_geo,
                size: sizes[j],
                recommendation: RecommendationView {
                    network_id: rec.network_id.clone(),
                    distance_m: rec.distance_m,
                    switched: rec.switched,
                },
            })
            .collect();
        SnapshotView {
            tick_time: iso8601(s.tick_time),
            tick_epoch_s: s.tick_time,
            provenance: s.provenance.as_str().to_string(),
            degraded: s.is_degraded(),
            aircraft,
            clusters,
            latency: Some(s.latency),
        }
    }

    /// Rebuilds the view of the latest tick at or before `at_ns` (latest
    /// overall when `None`) from the DT bucket.
    pub fn from_store(store: &Store, at_ns: Option<i64>) -> Option<SnapshotView> {
        let ticks = store.timestamps(Bucket::Dt, TICK_MEASUREMENT);
        let ts = *ticks.iter().rev().find(|&&t| at_ns.is_none_or(|a| t <= a))?;
        let in_tick = |m: &str| store.query_range(Bucket::Dt, m, ts, ts + 1);
        let marker = in_tick(TICK_MEASUREMENT).into_iter().next()?;
        let float = |p: &LinePoint, k: &str| p.field(k).and_then(FieldValue::as_f64).unwrap_or(f64::NAN);
        let int = |p: &LinePoint, k: &str| p.field(k).and_then(FieldValue::as_i64);
        let aircraft = in_tick(TWIN_MEASUREMENT)
            .iter()
            .map(|p| AircraftView {
                icao24: p.tag("icao24").unwrap_or_default().to_string(),
                lat: float(p, "latitude"),
                lon: float(p, "longitude"),
                alt: float(p, "altitude"),
                provenance: p.tag("provenance").unwrap_or_default().to_string(),
                cluster: int(p, "cluster").map(|c| c as usize),
                cluster_identity: int(p, "cluster_identity").map(|c| c as u64),
                recommendation_id: p.field("recommendation").and_then(FieldValue::as_str).map(str::to_string),
                stale: p.field("stale").and_then(FieldValue::as_bool).unwrap_or(false),
            })
            .collect();
        let mut clusters: Vec<(i64, ClusterView)> = in_tick(RECOMMENDATION_MEASUREMENT)
            .iter()
            .map(|p| {
                let view = ClusterView {
                    identity: p.tag("cluster_identity").and_then(|s| s.parse().ok()).unwrap_or_default(),
                    centroid_geo: CentroidGeo {
                        lat: float(p, "centroid_lat"),
                        lon: float(p, "centroid_lon"),
                        alt: float(p, "centroid_alt"),
                    },
                    size: int(p, "size").unwrap_or(0) as usize,
                    recommendation: RecommendationView {
                        network_id: p.field("network_id").and_then(FieldValue::as_str).unwrap_or_default().to_string(),
                        distance_m: float(p, "distance_m"),
                        switched: p.field("switched").and_then(FieldValue::as_bool).unwrap_or(false),
                    },
                };
                (int(p, "cluster").unwrap_or(0), view)
            })
            .collect();
        clusters.sort_by_key(|(j, _)| *j);
        let t = nanos_to_seconds(ts);
        Some(SnapshotView {
            tick_time: iso8601(t),
            tick_epoch_s: t,
            provenance: marker.tag("provenance").unwrap_or_default().to_string(),
            degraded: marker.field("degraded").is_some(),
            aircraft,
            clusters: clusters.into_iter().map(|(_, c)| c).collect(),
            latency: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ViewError {
    #[error("snapshot is degraded or has no clusters")]
    EmptySnapshot,
}

/// GeoJSON FeatureCollection with one Point per aircraft and one per
/// cluster centroid. Coordinates are `[lon, lat]`.
pub fn export_geojson(view: &SnapshotView) -> Result<Value, ViewError> {
    if view.degraded || view.clusters.is_empty() {
        return Err(ViewError::EmptySnapshot);
    }
    let aircraft = view.aircraft.iter().map(|a| {
        json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [a.lon, a.lat]},
            "properties": {
                "kind": "aircraft",
                "icao24": a.icao24,
                "cluster_identity": a.cluster_identity,
                "altitude_m": a.alt,
                "recommendation_id": a.recommendation_id,
                "stale": a.stale,
            },
        })
    });
    let centroids = view.clusters.iter().map(|c| {
        json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [c.centroid_geo.lon, c.centroid_geo.lat]},
            "properties": {
                "kind": "centroid",
                "cluster_identity": c.identity,
                "altitude_m": c.centroid_geo.alt,
                "size": c.size,
                "recommendation_id": c.recommendation.network_id,
                "distance_m": c.recommendation.distance_m,
            },
        })
    });
    Ok(json!({
        "type": "FeatureCollection",
        "properties": {"tick_time": view.tick_time, "provenance": view.provenance},
        "features": aircraft.chain(centroids).collect::<Vec<_>>(),
    }))
}

/// Flattens a bucket into CSV: `timestamp_ns,measurement,<tags...>,<fields...>`
/// with the union of tag and field keys as columns, ordered by name.
pub fn export_csv<W: Write>(store: &Store, bucket: Bucket, out: W) -> csv::Result<()> {
    let points = store.points(bucket);
    let mut tag_keys = BTreeMap::new();
    let mut field_keys = BTreeMap::new();
    for p in &points {
        for (k, _) in p.tags() {
            tag_keys.insert(k.clone(), ());
        }
        for (k, _) in p.fields() {
            field_keys.insert(k.clone(), ());
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = ["timestamp_ns".to_string(), "measurement".to_string()]
        .into_iter()
        .chain(tag_keys.keys().cloned())
        .chain(field_keys.keys().cloned())
        .collect();
    w.write_record(&header)?;
    for p in &points {
        let mut row = vec![p.timestamp().to_string(), p.measurement().to_string()];
        row.extend(tag_keys.keys().map(|k| p.tag(k).unwrap_or_default().to_string()));
        row.extend(field_keys.keys().map(|k| match p.field(k) {
            None => String::new(),
            Some(FieldValue::Float(v)) => v.to_string(),
            Some(FieldValue::Integer(v)) => v.to_string(),
            Some(FieldValue::Boolean(v)) => v.to_string(),
            Some(FieldValue::String(v)) => v.clone(),
        }));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
