//! Seeded synthetic fleet used for tests, benches and demo runs.
//!
//! Each aircraft flies from its epoch position with constant velocity,
//! track and vertical rate plus a constant per-aircraft horizontal
//! acceleration drawn from `N(0, accel_noise_std)`. Positions go through the
//! same [`displacement`] / [`apply_enu`] functions the projection uses, so a
//! zero-noise aircraft observed at the epoch projects to its exact truth.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AircraftState, BoundingBox, ExtractResult, ExtractSource};
use crate::exec::mix_seed;
use crate::projection::{apply_enu, displacement, Displacement};
use crate::EpochSeconds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAircraft {
    pub icao24: String,
    #[serde(default)]
    pub callsign: Option<String>,
    pub latitude: f64,
    pub longitude: f64,
    /// Meters.
    pub altitude: f64,
    /// Ground speed, m/s.
    pub velocity: f64,
    /// Degrees clockwise from true north.
    pub true_track: f64,
    #[serde(default)]
    pub vertical_rate: f64,
    #[serde(default)]
    pub on_ground: bool,
}

/// Parameters for generating a fleet clustered around seeded traffic hubs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetParams {
    pub n: usize,
    pub seed: u64,
    pub epoch: EpochSeconds,
    pub bbox: BoundingBox,
    pub hubs: usize,
    /// Standard deviation of aircraft positions around their hub, meters.
    pub hub_spread_m: f64,
    pub accel_noise_std: f64,
    pub jitter_max_s: f64,
    pub ground_fraction: f64,
    pub cycle_s: Option<f64>,
}

impl Default for FleetParams {
    fn default() -> Self {
        FleetParams {
            n: 100,
            seed: 42,
            epoch: 1_716_300_000.0,
            bbox: BoundingBox::UK,
            hubs: 4,
            hub_spread_m: 40_000.0,
            accel_noise_std: 0.0,
            jitter_max_s: 0.0,
            ground_fraction: 0.0,
            cycle_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFleetConfig {
    pub epoch: EpochSeconds,
    pub seed: u64,
    /// Standard deviation of the per-aircraft horizontal acceleration, m/s².
    #[serde(default)]
    pub accel_noise_std: f64,
    /// `time_position` lags the tick by a seeded amount in `[0, jitter_max_s]`.
    #[serde(default)]
    pub jitter_max_s: f64,
    /// When set, every aircraft restarts from its epoch position each cycle.
    #[serde(default)]
    pub cycle_s: Option<f64>,
    #[serde(default)]
    pub aircraft: Vec<SyntheticAircraft>,
    /// Alternative to listing `aircraft`: generate them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<FleetParams>,
}

#[derive(Debug, thiserror::Error)]
pub enum FleetError {
    #[error("reading fleet file: {0}")]
    Io(#[from] std::io::Error),
    #[error("fleet file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("fleet: {0}")]
    Invalid(String),
}

impl SyntheticFleetConfig {
    pub fn from_json(text: &str) -> Result<Self, FleetError> {
        let mut cfg: SyntheticFleetConfig = serde_json::from_str(text)?;
        if let Some(params) = cfg.generate.take() {
            if !cfg.aircraft.is_empty() {
                return Err(FleetError::Invalid("give either `aircraft` or `generate`, not both".into()));
            }
            let generated = params.build();
            cfg.aircraft = generated.aircraft;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FleetError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), FleetError> {
        let mut seen = std::collections::BTreeSet::new();
        for a in &self.aircraft {
            if a.icao24.is_empty() || !seen.insert(a.icao24.as_str()) {
                return Err(FleetError::Invalid(format!("icao24 {:?} empty or duplicated", a.icao24)));
            }
            if a.velocity < 0.0 || !(0.0..360.0).contains(&a.true_track) {
                return Err(FleetError::Invalid(format!("{}: velocity/track out of range", a.icao24)));
            }
            if a.latitude.abs() >= 89.5 || a.longitude.abs() > 180.0 {
                return Err(FleetError::Invalid(format!("{}: position out of range", a.icao24)));
            }
        }
        if self.accel_noise_std < 0.0 || self.jitter_max_s < 0.0 {
            return Err(FleetError::Invalid("noise parameters must be non-negative".into()));
        }
        if matches!(self.cycle_s, Some(c) if c <= 0.0) {
            return Err(FleetError::Invalid("cycle_s must be positive".into()));
        }
        Ok(())
    }

    fn acceleration(&self, index: usize) -> (f64, f64) {
        if self.accel_noise_std == 0.0 {
            return (0.0, 0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, index as u64, 0xACCE_1E7A));
        let normal = Normal::new(0.0, self.accel_noise_std).expect("finite std");
        (normal.sample(&mut rng), normal.sample(&mut rng))
    }

    fn jitter(&self, index: usize, tick_time: EpochSeconds) -> f64 {
        if self.jitter_max_s == 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, index as u64, tick_time.to_bits()));
        rng.random_range(0.0..=self.jitter_max_s)
    }

    /// Observed state of aircraft `index` for a tick at `tick_time`.
    pub fn observe(&self, index: usize, tick_time: EpochSeconds) -> Option<AircraftState> {
        let a = &self.aircraft[index];
        let observed_at = (tick_time - self.jitter(index, tick_time)).max(self.epoch.min(tick_time));
        let mut elapsed = (observed_at - self.epoch).max(0.0);
        if let Some(cycle) = self.cycle_s {
            elapsed %= cycle;
        }
        let (a_north, a_east) = self.acceleration(index);
        let d = displacement(a.velocity, a.true_track, a.vertical_rate, elapsed);
        let d = Displacement {
            north: d.north + 0.5 * a_north * elapsed * elapsed,
            east: d.east + 0.5 * a_east * elapsed * elapsed,
            up: d.up,
        };
        let pos = apply_enu(a.latitude, a.longitude, a.altitude, d).ok()?;
        let (velocity, true_track) = if a_north == 0.0 && a_east == 0.0 {
            (a.velocity, a.true_track)
        } else {
            let rad = a.true_track.to_radians();
            let vn = a.velocity * rad.cos() + a_north * elapsed;
            let ve = a.velocity * rad.sin() + a_east * elapsed;
            let track = ve.atan2(vn).to_degrees().rem_euclid(360.0);
            (vn.hypot(ve), if track >= 360.0 { 0.0 } else { track })
        };
        Some(AircraftState {
            icao24: a.icao24.clone(),
            callsign: a.callsign.clone(),
            origin_country: "United Kingdom".into(),
            time_position: Some(observed_at),
            last_contact: tick_time.max(observed_at),
            longitude: Some(pos.longitude),
            latitude: Some(pos.latitude),
            baro_altitude: Some(pos.altitude),
            on_ground: a.on_ground,
            velocity: Some(velocity),
            true_track: Some(true_track),
            vertical_rate: Some(a.vertical_rate),
            geo_altitude: Some(pos.altitude),
            spi: false,
            category: 0,
        })
    }
}

impl FleetParams {
    pub fn build(&self) -> SyntheticFleetConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, 0xF1EE7, 0));
        let (lat_c, lon_c) = self.bbox.center();
        let lat_half = (self.bbox.lat_max - self.bbox.lat_min) * 0.35;
        let lon_half = (self.bbox.lon_max - self.bbox.lon_min) * 0.35;
        let hubs: Vec<(f64, f64)> = (0..self.hubs.max(1))
            .map(|_| (lat_c + rng.random_range(-lat_half..=lat_half), lon_c + rng.random_range(-lon_half..=lon_half)))
            .collect();
        let spread = Normal::new(0.0, self.hub_spread_m.max(0.0)).expect("finite spread");
        let aircraft = (0..self.n)
            .map(|i| {
                let (hlat, hlon) = hubs[i % hubs.len()];
                let offset = Displacement { north: spread.sample(&mut rng), east: spread.sample(&mut rng), up: 0.0 };
                let pos = apply_enu(hlat, hlon, 0.0, offset).expect("hub latitude within range");
                let on_ground = rng.random_bool(self.ground_fraction.clamp(0.0, 1.0));
                let climbing = rng.random_bool(0.3);
                SyntheticAircraft {
                    icao24: format!("{:06x}", 0x40_0000 + i),
                    callsign: Some(format!("SYN{i:04}")),
                    latitude: pos.latitude,
                    longitude: pos.longitude,
                    altitude: if on_ground { 0.0 } else { rng.random_range(3_000.0..12_000.0) },
                    velocity: if on_ground { rng.random_range(0.0..10.0) } else { rng.random_range(150.0..260.0) },
                    true_track: rng.random_range(0.0..360.0),
                    vertical_rate: if climbing && !on_ground { rng.random_range(-10.0..10.0) } else { 0.0 },
                    on_ground,
                }
            })
            .collect();
        SyntheticFleetConfig {
            epoch: self.epoch,
            seed: self.seed,
            accel_noise_std: self.accel_noise_std,
            jitter_max_s: self.jitter_max_s,
            cycle_s: self.cycle_s,
            aircraft,
            generate: None,
        }
    }
}

/// Every aircraft of the fleet at `tick_time`, regardless of area.
pub fn synth_tick(fleet: &SyntheticFleetConfig, tick_time: EpochSeconds) -> ExtractResult {
    let states = (0..fleet.aircraft.len()).filter_map(|i| fleet.observe(i, tick_time)).collect();
    ExtractResult::from_states(tick_time, states)
}

pub struct SyntheticSource {
    fleet: SyntheticFleetConfig,
}

impl SyntheticSource {
    pub fn new(fleet: SyntheticFleetConfig) -> Self {
        SyntheticSource { fleet }
    }

    pub fn fleet(&self) -> &SyntheticFleetConfig {
        &self.fleet
    }
}

impl ExtractSource for SyntheticSource {
    fn fetch(&mut self, bbox: &BoundingBox, now: EpochSeconds) -> ExtractResult {
        let states = (0..self.fleet.aircraft.len())
            .filter_map(|i| self.fleet.observe(i, now))
            .filter(|s| bbox.contains(s.latitude.unwrap_or(f64::NAN), s.longitude.unwrap_or(f64::NAN)))
            .collect();
        ExtractResult::from_states(now, states)
    }

    fn describe(&self) -> String {
        format!("synth:{} aircraft", self.fleet.aircraft.len())
    }
}
