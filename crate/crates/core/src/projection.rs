//! Dead-reckoning of aircraft positions to a common target time.
//!
//! Each aircraft reports its position at its own `time_position`. Before
//! clustering, every position is moved forward by `Δt = target − time_position`
//! along its ground track at constant speed and vertical rate, then the
//! north/east/up displacement in meters is applied on a local equirectangular
//! approximation of a spherical Earth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::ExecMode;
use crate::ingest::AircraftState;
use crate::EpochSeconds;

/// Mean Earth radius, meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Latitude limit for [`apply_enu`]; the east-west scale diverges at the poles.
pub const MAX_ABS_LATITUDE: f64 = 89.5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Displacement {
    pub north: f64,
    pub east: f64,
    pub up: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
    /// Meters above ground, never negative.
    pub altitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ProjectionError {
    #[error("latitude {0} too close to a pole")]
    PolarLatitude(f64),
}

/// Displacement after `delta_t` seconds at ground speed `velocity` along
/// `true_track` (degrees clockwise from north), climbing at `vertical_rate`.
///
/// The cosine term is the north component and the sine term the east
/// component. Linear in `delta_t`.
pub fn displacement(velocity: f64, true_track: f64, vertical_rate: f64, delta_t: f64) -> Displacement {
    debug_assert!(delta_t >= 0.0, "negative delta_t {delta_t}");
    let track = true_track.to_radians();
    Displacement {
        north: velocity * track.cos() * delta_t,
        east: velocity * track.sin() * delta_t,
        up: vertical_rate * delta_t,
    }
}

/// Applies a local displacement in meters to a geodetic position.
///
/// Longitude wraps into `[-180, 180]`; altitude is clamped at ground level.
pub fn apply_enu(latitude: f64, longitude: f64, altitude: f64, d: Displacement) -> Result<GeoPoint, ProjectionError> {
    if latitude.abs() >= MAX_ABS_LATITUDE {
        return Err(ProjectionError::PolarLatitude(latitude));
    }
    let meters_to_deg = 180.0 / (std::f64::consts::PI * EARTH_RADIUS_M);
    let lat = latitude + d.north * meters_to_deg;
    let lon = longitude + d.east * meters_to_deg / latitude.to_radians().cos();
    Ok(GeoPoint { latitude: lat, longitude: wrap_longitude(lon), altitude: (altitude + d.up).max(0.0) })
}

fn wrap_longitude(lon: f64) -> f64 {
    if (-180.0..=180.0).contains(&lon) {
        lon
    } else {
        (lon + 180.0).rem_euclid(360.0) - 180.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Measured,
    Projected,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Measured => "measured",
            Provenance::Projected => "projected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NoPosition,
    TooStale,
    PolarLatitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    /// Projections further than this are flagged stale.
    pub t_max_s: f64,
    /// States at most this old from a fresh extract count as measured.
    pub measured_epsilon_s: f64,
    /// Return [`SkipReason::TooStale`] instead of a stale projection.
    pub exclude_stale: bool,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig { t_max_s: 60.0, measured_epsilon_s: 0.5, exclude_stale: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedState {
    pub base: AircraftState,
    pub target_time: EpochSeconds,
    /// `target_time − time_position`, clamped at 0.
    pub delta_t: f64,
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
    pub provenance: Provenance,
    pub stale: bool,
}

impl ProjectedState {
    pub fn icao24(&self) -> &str {
        &self.base.icao24
    }
}

/// Projects one state to `target_time`.
///
/// `fresh` tells whether the state came from this tick's successful extract;
/// only fresh, near-current states are marked [`Provenance::Measured`].
/// Without velocity or track the aircraft holds its horizontal position; the
/// vertical rate is still applied when known.
pub fn project_state(
    state: &AircraftState,
    target_time: EpochSeconds,
    config: &ProjectionConfig,
    fresh: bool,
) -> Result<ProjectedState, SkipReason> {
    let (Some(lat), Some(lon)) = (state.latitude, state.longitude) else {
        return Err(SkipReason::NoPosition);
    };
    let delta_t = (target_time - state.reference_time()).max(0.0);
    let stale = delta_t > config.t_max_s;
    if stale && config.exclude_stale {
        return Err(SkipReason::TooStale);
    }
    let vertical = state.vertical_rate.unwrap_or(0.0);
    let d = match (state.velocity, state.true_track) {
        (Some(v), Some(track)) => displacement(v, track, vertical, delta_t),
        _ => Displacement { up: vertical * delta_t, ..Displacement::default() },
    };
    let pos = apply_enu(lat, lon, state.base_altitude(), d).map_err(|_| SkipReason::PolarLatitude)?;
    let provenance =
        if fresh && delta_t <= config.measured_epsilon_s { Provenance::Measured } else { Provenance::Projected };
    Ok(ProjectedState {
        base: state.clone(),
        target_time,
        delta_t,
        latitude: pos.latitude,
        longitude: pos.longitude,
        altitude: pos.altitude,
        provenance,
        stale,
    })
}

/// Projects a batch; skipped aircraft are returned with their reason.
pub fn project_all(
    states: &[AircraftState],
    target_time: EpochSeconds,
    config: &ProjectionConfig,
    fresh: bool,
    exec: ExecMode,
) -> (Vec<ProjectedState>, Vec<(String, SkipReason)>) {
    let results = exec.map(states, |s| project_state(s, target_time, config, fresh));
    let mut projected = Vec::with_capacity(states.len());
    let mut skipped = Vec::new();
    for (s, r) in states.iter().zip(results) {
        match r {
            Ok(p) => projected.push(p),
            Err(reason) => skipped.push((s.icao24.clone(), reason)),
        }
    }
    (projected, skipped)
}
