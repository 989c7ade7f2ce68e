//! Tick orchestration: extract (with store fallback), project, scale,
//! cluster, recommend and load.

mod config;
mod handle;
mod schedule;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{match_clusters, select_k, ClusterModel, KMeansConfig, KRange};
use crate::features::{extract_features, fit_minmax, transform};
use crate::ingest::{fetch_states, AircraftState, BoundingBox, ExtractOutcome, ExtractSource, FailureReason};
use crate::projection::{project_all, ProjectedState, ProjectionConfig};
use crate::recommend::{recommend, CentroidGeo, CoreNetworkRegistry, Recommendation};
use crate::store::{
    point_to_state, state_to_point, Bucket, LinePoint, SharedStore, Store, StoreError, RECOMMENDATION_MEASUREMENT,
    STATE_MEASUREMENT, TICK_MEASUREMENT, TWIN_MEASUREMENT,
};
use crate::{seconds_to_nanos, EpochSeconds};

pub use config::{ConfigError, PipelineConfig, SourceConfig};
pub use handle::{LatencySummary, MetricsView, TwinHandle};
pub use schedule::{next_boundary, run_loop, run_schedule, Clock, LoopStats, ManualClock, StopSignal, SystemClock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotProvenance {
    Measured,
    ProjectedFallback,
}

impl SnapshotProvenance {
    pub fn as_str(self) -> &'static str {
        match self {
            SnapshotProvenance::Measured => "measured",
            SnapshotProvenance::ProjectedFallback => "projected_fallback",
        }
    }
}

/// What the extract step saw this tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExtractStatus {
    Ok { count: usize },
    Empty,
    Failed { reason: FailureReason },
}

impl ExtractStatus {
    pub fn label(self) -> String {
        match self {
            ExtractStatus::Ok { count } => format!("ok:{count}"),
            ExtractStatus::Empty => "empty".into(),
            ExtractStatus::Failed { reason } => format!("failed:{reason}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradedReason {
    /// The extract failed and the Physical bucket had nothing to fall back on.
    FallbackEmpty,
    /// No airborne, non-stale aircraft to cluster.
    EmptyMatrix,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub preprocessing_ms: f64,
    pub decision_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinRecord {
    pub projected: ProjectedState,
    /// Index into the snapshot's model; present iff the aircraft was clustered.
    pub cluster: Option<usize>,
    pub cluster_identity: Option<u64>,
    pub recommendation_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinSnapshot {
    pub tick_time: EpochSeconds,
    pub provenance: SnapshotProvenance,
    pub extract: ExtractStatus,
    /// Sorted by icao24.
    pub records: Vec<TwinRecord>,
    pub model: Option<ClusterModel>,
    /// Stable identity of every model cluster, by cluster index.
    pub identities: Vec<u64>,
    /// Model centroids in raw units, by cluster index.
    pub centroids_geo: Vec<CentroidGeo>,
    /// One per model cluster, by cluster index.
    pub recommendations: Vec<Recommendation>,
    pub latency: Latency,
    pub degraded: Option<DegradedReason>,
}

impl TwinSnapshot {
    pub fn is_degraded(&self) -> bool {
        self.degraded.is_some()
    }

    pub fn cluster_count(&self) -> usize {
        self.model.as_ref().map_or(0, |m| m.k)
    }

    /// icao24 → cluster identity for every clustered aircraft.
    pub fn identity_assignments(&self) -> BTreeMap<String, u64> {
        self.records.iter().filter_map(|r| Some((r.projected.icao24().to_string(), r.cluster_identity?))).collect()
    }
}

#[derive(Debug, Error)]
pub enum TickError {
    #[error("tick time {now} does not advance past {previous}")]
    NonMonotonic { now: EpochSeconds, previous: EpochSeconds },
    #[error("store: {0}")]
    Store(#[from] StoreError),
}

/// Failed extract with nothing in the Physical bucket to fall back on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("extract {0:?} and no stored records to fall back on")]
pub struct FallbackEmpty(pub ExtractStatus);

#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub states: Vec<AircraftState>,
    pub provenance: SnapshotProvenance,
    pub status: ExtractStatus,
}

/// Fetches from `source`. Fresh states are written to the Physical bucket;
/// on an empty or failed fetch the latest stored record of every aircraft
/// up to `now` is returned instead and nothing is written.
pub fn extract_with_fallback(
    source: &mut dyn ExtractSource,
    store: &SharedStore,
    bbox: &BoundingBox,
    now: EpochSeconds,
) -> Result<Result<Extracted, FallbackEmpty>, StoreError> {
    let result = fetch_states(source, bbox, now);
    let status = match result.outcome {
        ExtractOutcome::Ok(states) => {
            let points: Vec<LinePoint> = states
                .iter()
                .filter_map(|s| match state_to_point(s, result.fetched_at) {
                    Ok(p) => Some(p),
                    Err(e) => {
                        tracing::warn!(icao24 = %s.icao24, error = %e, "state not storable");
                        None
                    }
                })
                .collect();
            store.write().expect("store lock poisoned").write_points(Bucket::Physical, &points)?;
            let status = ExtractStatus::Ok { count: states.len() };
            return Ok(Ok(Extracted { states, provenance: SnapshotProvenance::Measured, status }));
        }
        ExtractOutcome::Empty => ExtractStatus::Empty,
        ExtractOutcome::Failed(reason) => ExtractStatus::Failed { reason },
    };
    let last = store.read().expect("store lock poisoned").last_records(
        Bucket::Physical,
        STATE_MEASUREMENT,
        seconds_to_nanos(now),
    );
    let states: Vec<AircraftState> = last.values().filter_map(point_to_state).collect();
    if states.is_empty() {
        return Ok(Err(FallbackEmpty(status)));
    }
    tracing::info!(status = %status.label(), n = states.len(), "extract fallback to stored records");
    Ok(Ok(Extracted { states, provenance: SnapshotProvenance::ProjectedFallback, status }))
}

/// Per-tick knobs derived from [`PipelineConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct TickConfig {
    pub bbox: BoundingBox,
    pub k_range: KRange,
    pub seed: u64,
    pub projection: ProjectionConfig,
    pub kmeans: KMeansConfig,
}

impl Default for TickConfig {
    fn default() -> Self {
        TickConfig::from(&PipelineConfig::default())
    }
}

impl From<&PipelineConfig> for TickConfig {
    fn from(c: &PipelineConfig) -> Self {
        TickConfig { bbox: c.bbox, k_range: c.k_range(), seed: c.seed, projection: c.projection(), kmeans: c.kmeans() }
    }
}

/// Everything one pipeline owns across ticks.
pub struct TickContext {
    pub source: Box<dyn ExtractSource>,
    pub store: SharedStore,
    pub registry: CoreNetworkRegistry,
    pub config: TickConfig,
    previous: Option<Arc<TwinSnapshot>>,
    next_identity: u64,
}

impl TickContext {
    pub fn new(
        source: Box<dyn ExtractSource>,
        store: SharedStore,
        registry: CoreNetworkRegistry,
        config: TickConfig,
    ) -> Self {
        TickContext { source, store, registry, config, previous: None, next_identity: 0 }
    }

    /// Builds source, store and registry from a validated config file.
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, ConfigError> {
        Self::with_source(cfg, cfg.source.build(cfg.seed)?)
    }

    /// Like [`TickContext::from_config`] with an already opened source.
    pub fn with_source(cfg: &PipelineConfig, source: Box<dyn ExtractSource>) -> Result<Self, ConfigError> {
        let mut store = match &cfg.store_dir {
            Some(dir) => Store::open(dir).map_err(|e| ConfigError::Invalid(format!("store {}: {e}", dir.display())))?,
            None => Store::new(),
        };
        if let Some(r) = cfg.retention_s {
            store = store.with_max_age(r);
        }
        Ok(TickContext::new(source, store.shared(), cfg.registry()?, TickConfig::from(cfg)))
    }

    pub fn previous(&self) -> Option<&Arc<TwinSnapshot>> {
        self.previous.as_ref()
    }

    /// Runs one tick at `now` and remembers the snapshot for cluster
    /// matching and hysteresis on the next one.
    pub fn tick(&mut self, now: EpochSeconds) -> Result<Arc<TwinSnapshot>, TickError> {
        let snapshot = Arc::new(run_tick(self, now)?);
        self.previous = Some(snapshot.clone());
        Ok(snapshot)
    }
}

fn millis(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Stable identities for the new model's clusters: matched clusters inherit
/// the previous identity, the rest get fresh ones.
fn assign_identities(
    previous: Option<&TwinSnapshot>,
    model: &ClusterModel,
    rescale: impl Fn(&CentroidGeo) -> Vec<f64>,
    next_identity: &mut u64,
) -> Vec<u64> {
    let prev_scaled: Vec<f64> = previous.map_or_else(Vec::new, |p| p.centroids_geo.iter().flat_map(&rescale).collect());
    let matched = match_clusters(&prev_scaled, &model.centroids, model.dim);
    matched
        .into_iter()
        .map(|m| match (m, previous) {
            (Some(j), Some(p)) => p.identities[j],
            _ => {
                let id = *next_identity;
                *next_identity += 1;
                id
            }
        })
        .collect()
}

fn geo_of(raw: &[f64]) -> CentroidGeo {
    CentroidGeo { lon: raw[0], lat: raw[1], alt: raw[2] }
}

fn geo_row(g: &CentroidGeo) -> [f64; 3] {
    [g.lon, g.lat, g.alt]
}

/// One pass of the pipeline at target time `now`.
pub fn run_tick(ctx: &mut TickContext, now: EpochSeconds) -> Result<TwinSnapshot, TickError> {
    if let Some(prev) = &ctx.previous {
        if now <= prev.tick_time {
            return Err(TickError::NonMonotonic { now, previous: prev.tick_time });
        }
    }
    let start = Instant::now();
    let cfg = ctx.config.clone();
    let extracted = extract_with_fallback(ctx.source.as_mut(), &ctx.store, &cfg.bbox, now)?;
    let (provenance, status, states) = match extracted {
        Ok(e) => (e.provenance, e.status, e.states),
        Err(FallbackEmpty(status)) => (SnapshotProvenance::ProjectedFallback, status, Vec::new()),
    };
    let fresh = provenance == SnapshotProvenance::Measured;
    let (projected, skipped) = project_all(&states, now, &cfg.projection, fresh, cfg.kmeans.exec);
    if !skipped.is_empty() {
        tracing::debug!(n = skipped.len(), "aircraft skipped by projection");
    }
    let scaled = extract_features(&projected).and_then(|m| {
        let params = fit_minmax(&m)?;
        let scaled = transform(&params, &m)?;
        Ok((params, scaled))
    });
    let preprocessing_ms = millis(start);

    let mut snapshot = TwinSnapshot {
        tick_time: now,
        provenance,
        extract: status,
        records: Vec::new(),
        model: None,
        identities: Vec::new(),
        centroids_geo: Vec::new(),
        recommendations: Vec::new(),
        latency: Latency::default(),
        degraded: None,
    };
    let decision_start = Instant::now();
    let mut labels: BTreeMap<String, usize> = BTreeMap::new();
    match scaled {
        Err(_) if states.is_empty() => snapshot.degraded = Some(DegradedReason::FallbackEmpty),
        Err(_) => snapshot.degraded = Some(DegradedReason::EmptyMatrix),
        Ok((params, m)) => {
            let model = select_k(&m, cfg.k_range, cfg.seed, &cfg.kmeans).expect("non-empty matrix and valid range");
            let centroids_geo: Vec<CentroidGeo> =
                model.centroids.chunks_exact(model.dim).map(|c| geo_of(&params.unscale_row(c))).collect();
            let identities = assign_identities(
                ctx.previous.as_deref(),
                &model,
                |g| params.scale_row(&geo_row(g)),
                &mut ctx.next_identity,
            );
            let previous_recs: BTreeMap<u64, &Recommendation> =
                ctx.previous.iter().flat_map(|p| p.recommendations.iter()).map(|r| (r.cluster_identity, r)).collect();
            snapshot.recommendations = identities
                .iter()
                .zip(&centroids_geo)
                .map(|(&id, &geo)| recommend(id, geo, &ctx.registry, previous_recs.get(&id).copied(), now))
                .collect();
            for (key, &label) in m.keys().iter().zip(&model.assignments) {
                labels.insert(key.clone(), label);
            }
            snapshot.identities = identities;
            snapshot.centroids_geo = centroids_geo;
            snapshot.model = Some(model);
        }
    }
    let decision_ms = millis(decision_start);

    let mut records: Vec<TwinRecord> = projected
        .into_iter()
        .map(|p| {
            let cluster = labels.get(p.icao24()).copied();
            TwinRecord {
                cluster,
                cluster_identity: cluster.map(|c| snapshot.identities[c]),
                recommendation_id: cluster.map(|c| snapshot.recommendations[c].network_id.clone()),
                projected: p,
            }
        })
        .collect();
    records.sort_by(|a, b| a.projected.icao24().cmp(b.projected.icao24()));
    snapshot.records = records;

    let points = dt_points(&snapshot);
    ctx.store.write().expect("store lock poisoned").write_points(Bucket::Dt, &points)?;
    snapshot.latency = Latency { preprocessing_ms, decision_ms, total_ms: millis(start) };
    Ok(snapshot)
}

/// DT-bucket points for a snapshot: one tick marker, one twin point per
/// record and one recommendation point per cluster. Latencies are left out
/// so replays of the same trace export identical bytes.
pub fn dt_points(s: &TwinSnapshot) -> Vec<LinePoint> {
    let ts = seconds_to_nanos(s.tick_time);
    let mut out = Vec::with_capacity(s.records.len() + s.recommendations.len() + 1);
    let marker = LinePoint::builder(TICK_MEASUREMENT)
        .tag("provenance", s.provenance.as_str())
        .field("extract", s.extract.label())
        .field("records", s.records.len() as i64)
        .field("k", s.cluster_count() as i64)
        .field_opt(
            "degraded",
            s.degraded.map(|d| match d {
                DegradedReason::FallbackEmpty => "fallback_empty",
                DegradedReason::EmptyMatrix => "empty_matrix",
            }),
        )
        .timestamp(ts)
        .build()
        .expect("tick marker is valid");
    out.push(marker);
    for r in &s.records {
        let p = &r.projected;
        let b = &p.base;
        let point = LinePoint::builder(TWIN_MEASUREMENT)
            .tag("icao24", b.icao24.as_str())
            .tag("provenance", p.provenance.as_str())
            .field_opt("callsign", b.callsign.clone().filter(|c| !c.is_empty()))
            .field("latitude", p.latitude)
            .field("longitude", p.longitude)
            .field("altitude", p.altitude)
            .field("delta_t", p.delta_t)
            .field("stale", p.stale)
            .field("on_ground", b.on_ground)
            .field_opt("velocity", b.velocity)
            .field_opt("true_track", b.true_track)
            .field_opt("vertical_rate", b.vertical_rate)
            .field("clustered", r.cluster.is_some())
            .field_opt("cluster", r.cluster.map(|c| c as i64))
            .field_opt("cluster_identity", r.cluster_identity.map(|c| c as i64))
            .field_opt("recommendation", r.recommendation_id.clone())
            .timestamp(ts)
            .build();
        match point {
            Ok(point) => out.push(point),
            Err(e) => tracing::warn!(icao24 = %b.icao24, error = %e, "twin record not storable"),
        }
    }
    let sizes = s.model.as_ref().map(ClusterModel::cluster_sizes).unwrap_or_default();
    for (j, rec) in s.recommendations.iter().enumerate() {
        let point = LinePoint::builder(RECOMMENDATION_MEASUREMENT)
            .tag("cluster_identity", rec.cluster_identity.to_string())
            .field("cluster", j as i64)
            .field("network_id", rec.network_id.as_str())
            .field("centroid_lat", rec.centroid_geo.lat)
            .field("centroid_lon", rec.centroid_geo.lon)
            .field("centroid_alt", rec.centroid_geo.alt)
            .field("distance_m", rec.distance_m)
            .field("switched", rec.switched)
            .field("size", sizes.get(j).copied().unwrap_or(0) as i64)
            .timestamp(ts)
            .build()
            .expect("recommendation point is valid");
        out.push(point);
    }
    out
}
