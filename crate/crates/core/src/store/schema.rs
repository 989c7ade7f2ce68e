//! Mapping between aircraft states and `state` points in the Physical bucket.

use super::line::{FieldValue, LinePoint, PointError};
use crate::ingest::AircraftState;
use crate::{nanos_to_seconds, seconds_to_nanos, EpochSeconds};

pub const STATE_MEASUREMENT: &str = "state";
pub const TWIN_MEASUREMENT: &str = "twin";
pub const RECOMMENDATION_MEASUREMENT: &str = "recommendation";
pub const TICK_MEASUREMENT: &str = "tick";

/// Encodes a measured state fetched at `fetched_at`. The point timestamp is
/// the fetch time so that the latest fetch always wins in `last_records`.
pub fn state_to_point(s: &AircraftState, fetched_at: EpochSeconds) -> Result<LinePoint, PointError> {
    LinePoint::builder(STATE_MEASUREMENT)
        .tag("icao24", s.icao24.as_str())
        .tag("provenance", "measured")
        .field_opt("callsign", s.callsign.clone().filter(|c| !c.is_empty()))
        .field("origin_country", s.origin_country.as_str())
        .field_opt("time_position", s.time_position)
        .field("last_contact", s.last_contact)
        .field_opt("longitude", s.longitude)
        .field_opt("latitude", s.latitude)
        .field_opt("baro_altitude", s.baro_altitude)
        .field("on_ground", s.on_ground)
        .field_opt("velocity", s.velocity)
        .field_opt("true_track", s.true_track)
        .field_opt("vertical_rate", s.vertical_rate)
        .field_opt("geo_altitude", s.geo_altitude)
        .field("spi", s.spi)
        .field("category", i64::from(s.category))
        .timestamp(seconds_to_nanos(fetched_at))
        .build()
}

/// Rebuilds the state stored by [`state_to_point`]. Returns `None` for
/// points that lack an icao24 tag or a `last_contact` field.
pub fn point_to_state(p: &LinePoint) -> Option<AircraftState> {
    let float = |k: &str| p.field(k).and_then(FieldValue::as_f64);
    let flag = |k: &str| p.field(k).and_then(FieldValue::as_bool).unwrap_or(false);
    Some(AircraftState {
        icao24: p.tag("icao24")?.to_string(),
        callsign: p.field("callsign").and_then(FieldValue::as_str).map(str::to_string),
        origin_country: p.field("origin_country").and_then(FieldValue::as_str).unwrap_or_default().to_string(),
        time_position: float("time_position"),
        last_contact: float("last_contact")?,
        longitude: float("longitude"),
        latitude: float("latitude"),
        baro_altitude: float("baro_altitude"),
        on_ground: flag("on_ground"),
        velocity: float("velocity"),
        true_track: float("true_track"),
        vertical_rate: float("vertical_rate"),
        geo_altitude: float("geo_altitude"),
        spi: flag("spi"),
        category: p.field("category").and_then(FieldValue::as_i64).and_then(|c| u8::try_from(c).ok()).unwrap_or(0),
    })
}

/// Fetch time recorded on a state point.
pub fn point_time(p: &LinePoint) -> EpochSeconds {
    nanos_to_seconds(p.timestamp())
}
