//! Extract sources for aircraft state vectors.
//!
//! Three interchangeable sources produce the same [`ExtractResult`]: the live
//! REST client ([`live`]), a recorded newline-delimited JSON trace
//! ([`replay`]) and a seeded synthetic fleet ([`synth`]).

pub mod live;
pub mod replay;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::EpochSeconds;

pub use live::{LiveConfig, LiveSource};
pub use replay::{replay_tick, FailKind, ReplayCursor, ReplaySource, ReplayTrace, TraceError, TraceRecord};
pub use synth::{synth_tick, FleetParams, SyntheticAircraft, SyntheticFleetConfig, SyntheticSource};

/// One aircraft's state vector as reported by the surveillance network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AircraftState {
    pub icao24: String,
    #[serde(default)]
    pub callsign: Option<String>,
    #[serde(default)]
    pub origin_country: String,
    #[serde(default)]
    pub time_position: Option<EpochSeconds>,
    pub last_contact: EpochSeconds,
    #[serde(default)]
    pub longitude: Option<f64>,
    #[serde(default)]
    pub latitude: Option<f64>,
    #[serde(default)]
    pub baro_altitude: Option<f64>,
    #[serde(default)]
    pub on_ground: bool,
    #[serde(default)]
    pub velocity: Option<f64>,
    #[serde(default)]
    pub true_track: Option<f64>,
    #[serde(default)]
    pub vertical_rate: Option<f64>,
    #[serde(default)]
    pub geo_altitude: Option<f64>,
    #[serde(default)]
    pub spi: bool,
    #[serde(default)]
    pub category: u8,
}

impl AircraftState {
    /// Checks the per-state invariants.
    pub fn validate(&self) -> Result<(), ParseError> {
        if self.icao24.is_empty() {
            return Err(ParseError::MissingIcao24);
        }
        if let Some(lon) = self.longitude {
            if !(-180.0..=180.0).contains(&lon) {
                return Err(ParseError::OutOfRange("longitude", lon));
            }
        }
        if let Some(lat) = self.latitude {
            if !(-90.0..=90.0).contains(&lat) {
                return Err(ParseError::OutOfRange("latitude", lat));
            }
        }
        if let Some(tp) = self.time_position {
            if self.last_contact < tp {
                return Err(ParseError::ContactBeforePosition);
            }
        }
        Ok(())
    }

    pub fn has_position(&self) -> bool {
        self.longitude.is_some() && self.latitude.is_some()
    }

    /// Time the position was measured at, falling back to the last contact.
    pub fn reference_time(&self) -> EpochSeconds {
        self.time_position.unwrap_or(self.last_contact)
    }

    /// Altitude used as the projection base: geometric, then barometric,
    /// then ground level.
    pub fn base_altitude(&self) -> f64 {
        self.geo_altitude.or(self.baro_altitude).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("state row has {0} entries, expected at least 17")]
    TooShort(usize),
    #[error("icao24 missing or empty")]
    MissingIcao24,
    #[error("field {field} has unexpected JSON type")]
    BadType { field: &'static str },
    #[error("{0} out of range: {1}")]
    OutOfRange(&'static str, f64),
    #[error("last_contact precedes time_position")]
    ContactBeforePosition,
    #[error("malformed response: {0}")]
    Malformed(String),
}

/// Why an extract produced no data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Timeout,
    /// HTTP status of the failed request; 0 when no response was received.
    HttpError(u16),
    ParseError,
    SourceExhausted,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::Timeout => f.write_str("timeout"),
            FailureReason::HttpError(code) => write!(f, "http error {code}"),
            FailureReason::ParseError => f.write_str("parse error"),
            FailureReason::SourceExhausted => f.write_str("source exhausted"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtractOutcome {
    /// At least one state; icao24 values are unique.
    Ok(Vec<AircraftState>),
    Empty,
    Failed(FailureReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractResult {
    pub fetched_at: EpochSeconds,
    pub outcome: ExtractOutcome,
}

impl ExtractResult {
    /// Builds an `Ok` result, or `Empty` when `states` is empty. Duplicate
    /// icao24 entries keep the most recent `last_contact` (first wins on
    /// ties); output is sorted by icao24.
    pub fn from_states(fetched_at: EpochSeconds, states: Vec<AircraftState>) -> Self {
        let mut unique: BTreeMap<String, AircraftState> = BTreeMap::new();
        for s in states {
            match unique.get(&s.icao24) {
                Some(prev) if prev.last_contact >= s.last_contact => {}
                _ => {
                    unique.insert(s.icao24.clone(), s);
                }
            }
        }
        let outcome =
            if unique.is_empty() { ExtractOutcome::Empty } else { ExtractOutcome::Ok(unique.into_values().collect()) };
        ExtractResult { fetched_at, outcome }
    }

    pub fn empty(fetched_at: EpochSeconds) -> Self {
        ExtractResult { fetched_at, outcome: ExtractOutcome::Empty }
    }

    pub fn failed(fetched_at: EpochSeconds, reason: FailureReason) -> Self {
        ExtractResult { fetched_at, outcome: ExtractOutcome::Failed(reason) }
    }

    pub fn states(&self) -> Option<&[AircraftState]> {
        match &self.outcome {
            ExtractOutcome::Ok(s) => Some(s),
            _ => None,
        }
    }
}

/// Geographic query box in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid bounding box: {0}")]
pub struct BoundingBoxError(pub String);

impl BoundingBox {
    /// Default box covering the UK.
    pub const UK: BoundingBox = BoundingBox { lat_min: 49.9, lat_max: 60.9, lon_min: -8.6, lon_max: 1.8 };

    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self, BoundingBoxError> {
        let b = BoundingBox { lat_min, lat_max, lon_min, lon_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), BoundingBoxError> {
        if self.lat_min.partial_cmp(&self.lat_max) != Some(std::cmp::Ordering::Less) {
            return Err(BoundingBoxError(format!("lat_min {} must be < lat_max {}", self.lat_min, self.lat_max)));
        }
        if self.lon_min.partial_cmp(&self.lon_max) != Some(std::cmp::Ordering::Less) {
            return Err(BoundingBoxError(format!("lon_min {} must be < lon_max {}", self.lon_min, self.lon_max)));
        }
        if self.lat_min < -90.0 || self.lat_max > 90.0 || self.lon_min < -180.0 || self.lon_max > 180.0 {
            return Err(BoundingBoxError("coordinates outside WGS-84 range".into()));
        }
        Ok(())
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.lat_min..=self.lat_max).contains(&lat) && (self.lon_min..=self.lon_max).contains(&lon)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.lat_min + self.lat_max) / 2.0, (self.lon_min + self.lon_max) / 2.0)
    }
}

impl Default for BoundingBox {
    fn default() -> Self {
        BoundingBox::UK
    }
}

/// Anything that can be polled for a batch of state vectors.
///
/// Implementations encode every failure in the returned result; `fetch`
/// never panics on source problems.
pub trait ExtractSource: Send {
    fn fetch(&mut self, bbox: &BoundingBox, now: EpochSeconds) -> ExtractResult;

    /// Minimum spacing between fetches, in seconds.
    fn min_interval_s(&self) -> f64 {
        0.0
    }

    /// For sources that carry their own clock (replay), the time of the next
    /// record. `None` for wall-clock driven sources.
    fn next_tick_hint(&self) -> Option<EpochSeconds> {
        None
    }

    fn describe(&self) -> String;
}

pub fn fetch_states(source: &mut dyn ExtractSource, bbox: &BoundingBox, now: EpochSeconds) -> ExtractResult {
    source.fetch(bbox, now)
}

// Positional layout of a REST `states` row.
const IDX_ICAO24: usize = 0;
const IDX_CALLSIGN: usize = 1;
const IDX_ORIGIN_COUNTRY: usize = 2;
const IDX_TIME_POSITION: usize = 3;
const IDX_LAST_CONTACT: usize = 4;
const IDX_LONGITUDE: usize = 5;
const IDX_LATITUDE: usize = 6;
const IDX_BARO_ALTITUDE: usize = 7;
const IDX_ON_GROUND: usize = 8;
const IDX_VELOCITY: usize = 9;
const IDX_TRUE_TRACK: usize = 10;
const IDX_VERTICAL_RATE: usize = 11;
const IDX_GEO_ALTITUDE: usize = 13;
const IDX_SPI: usize = 15;
const IDX_CATEGORY: usize = 17;
const MIN_ROW_LEN: usize = 17;
const FULL_ROW_LEN: usize = 18;

fn opt_f64(raw: &[Value], idx: usize, field: &'static str) -> Result<Option<f64>, ParseError> {
    match raw.get(idx) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => n.as_f64().map(Some).ok_or(ParseError::BadType { field }),
        Some(_) => Err(ParseError::BadType { field }),
    }
}

fn opt_str(raw: &[Value], idx: usize, field: &'static str) -> Result<Option<String>, ParseError> {
    match raw.get(idx) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(ParseError::BadType { field }),
    }
}

fn bool_or_false(raw: &[Value], idx: usize, field: &'static str) -> Result<bool, ParseError> {
    match raw.get(idx) {
        None | Some(Value::Null) => Ok(false),
        Some(Value::Bool(b)) => Ok(*b),
        Some(_) => Err(ParseError::BadType { field }),
    }
}

/// Maps one positional row of the REST `states` array to a named state.
///
/// Null entries stay absent. `icao24` is trimmed and lowercased; the
/// callsign keeps its content minus surrounding padding.
pub fn parse_state_row(raw: &[Value]) -> Result<AircraftState, ParseError> {
    if raw.len() < MIN_ROW_LEN {
        return Err(ParseError::TooShort(raw.len()));
    }
    let icao24 = opt_str(raw, IDX_ICAO24, "icao24")?
        .map(|s| s.trim().to_ascii_lowercase())
        .filter(|s| !s.is_empty())
        .ok_or(ParseError::MissingIcao24)?;
    let callsign = opt_str(raw, IDX_CALLSIGN, "callsign")?.map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
    let origin_country = opt_str(raw, IDX_ORIGIN_COUNTRY, "origin_country")?.unwrap_or_default();
    let time_position = opt_f64(raw, IDX_TIME_POSITION, "time_position")?;
    let last_contact = opt_f64(raw, IDX_LAST_CONTACT, "last_contact")?
        .or(time_position)
        .ok_or(ParseError::BadType { field: "last_contact" })?;
    let category = match raw.get(IDX_CATEGORY) {
        None | Some(Value::Null) => 0,
        Some(Value::Number(n)) => {
            n.as_u64().and_then(|c| u8::try_from(c).ok()).ok_or(ParseError::BadType { field: "category" })?
        }
        Some(_) => return Err(ParseError::BadType { field: "category" }),
    };
    let state = AircraftState {
        icao24,
        callsign,
        origin_country,
        time_position,
        last_contact,
        longitude: opt_f64(raw, IDX_LONGITUDE, "longitude")?,
        latitude: opt_f64(raw, IDX_LATITUDE, "latitude")?,
        baro_altitude: opt_f64(raw, IDX_BARO_ALTITUDE, "baro_altitude")?,
        on_ground: bool_or_false(raw, IDX_ON_GROUND, "on_ground")?,
        velocity: opt_f64(raw, IDX_VELOCITY, "velocity")?,
        true_track: opt_f64(raw, IDX_TRUE_TRACK, "true_track")?,
        vertical_rate: opt_f64(raw, IDX_VERTICAL_RATE, "vertical_rate")?,
        geo_altitude: opt_f64(raw, IDX_GEO_ALTITUDE, "geo_altitude")?,
        spi: bool_or_false(raw, IDX_SPI, "spi")?,
        category,
    };
    state.validate()?;
    Ok(state)
}

/// Inverse of [`parse_state_row`]: emits the 18-entry positional layout with
/// the ignored slots (sensors, squawk, position source) set to null/0.
pub fn serialize_state_row(s: &AircraftState) -> Vec<Value> {
    fn num(v: Option<f64>) -> Value {
        v.and_then(serde_json::Number::from_f64).map(Value::Number).unwrap_or(Value::Null)
    }
    let mut row = vec![Value::Null; FULL_ROW_LEN];
    row[IDX_ICAO24] = Value::String(s.icao24.clone());
    row[IDX_CALLSIGN] = s.callsign.clone().map(Value::String).unwrap_or(Value::Null);
    row[IDX_ORIGIN_COUNTRY] = Value::String(s.origin_country.clone());
    row[IDX_TIME_POSITION] = num(s.time_position);
    row[IDX_LAST_CONTACT] = num(Some(s.last_contact));
    row[IDX_LONGITUDE] = num(s.longitude);
    row[IDX_LATITUDE] = num(s.latitude);
    row[IDX_BARO_ALTITUDE] = num(s.baro_altitude);
    row[IDX_ON_GROUND] = Value::Bool(s.on_ground);
    row[IDX_VELOCITY] = num(s.velocity);
    row[IDX_TRUE_TRACK] = num(s.true_track);
    row[IDX_VERTICAL_RATE] = num(s.vertical_rate);
    row[IDX_GEO_ALTITUDE] = num(s.geo_altitude);
    row[IDX_SPI] = Value::Bool(s.spi);
    row[16] = Value::from(0);
    row[IDX_CATEGORY] = Value::from(s.category);
    row
}

/// Parses a full REST response body (`{"time": .., "states": [[..], ..]}`).
///
/// Rows that fail to parse are dropped with a warning; a body whose rows
/// all fail is a parse error.
pub fn parse_states_response(body: &str, fetched_at: EpochSeconds) -> Result<ExtractResult, ParseError> {
    #[derive(Deserialize)]
    struct Response {
        #[serde(default)]
        time: Option<f64>,
        #[serde(default)]
        states: Option<Vec<Vec<Value>>>,
    }
    let resp: Response = serde_json::from_str(body).map_err(|e| ParseError::Malformed(e.to_string()))?;
    let rows = resp.states.unwrap_or_default();
    let total = rows.len();
    let mut states = Vec::with_capacity(total);
    for row in &rows {
        match parse_state_row(row) {
            Ok(s) => states.push(s),
            Err(e) => tracing::warn!(error = %e, "dropping unparseable state row"),
        }
    }
    if total > 0 && states.is_empty() {
        return Err(ParseError::Malformed(format!("all {total} state rows invalid")));
    }
    Ok(ExtractResult::from_states(resp.time.unwrap_or(fetched_at), states))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn example_row() -> Vec<Value> {
        json!([
            "406b93",
            "BAW123 ",
            "United Kingdom",
            1716300000,
            1716300005,
            -0.4613,
            51.4712,
            10972.8,
            false,
            245.3,
            271.5,
            0.0,
            null,
            11012.1,
            null,
            false,
            0,
            3
        ])
        .as_array()
        .unwrap()
        .clone()
    }

    #[test]
    fn parses_example_row() {
        let s = parse_state_row(&example_row()).unwrap();
        assert_eq!(s.icao24, "406b93");
        assert_eq!(s.callsign.as_deref(), Some("BAW123"));
        assert_eq!(s.origin_country, "United Kingdom");
        assert_eq!(s.time_position, Some(1716300000.0));
        assert_eq!(s.last_contact, 1716300005.0);
        assert_eq!(s.longitude, Some(-0.4613));
        assert_eq!(s.latitude, Some(51.4712));
        assert_eq!(s.baro_altitude, Some(10972.8));
        assert!(!s.on_ground);
        assert_eq!(s.velocity, Some(245.3));
        assert_eq!(s.true_track, Some(271.5));
        assert_eq!(s.vertical_rate, Some(0.0));
        assert_eq!(s.geo_altitude, Some(11012.1));
        assert!(!s.spi);
        assert_eq!(s.category, 3);
    }

    #[test]
    fn null_position_is_kept_absent() {
        let mut row = example_row();
        row[5] = Value::Null;
        row[6] = Value::Null;
        let s = parse_state_row(&row).unwrap();
        assert!(s.longitude.is_none() && s.latitude.is_none());
        assert!(!s.has_position());
    }

    #[test]
    fn empty_icao24_rejected() {
        let mut row = example_row();
        row[0] = json!("");
        assert_eq!(parse_state_row(&row), Err(ParseError::MissingIcao24));
        row[0] = Value::Null;
        assert_eq!(parse_state_row(&row), Err(ParseError::MissingIcao24));
    }

    #[test]
    fn short_row_rejected_but_seventeen_ok() {
        let row = example_row();
        assert_eq!(parse_state_row(&row[..16]), Err(ParseError::TooShort(16)));
        let s = parse_state_row(&row[..17]).unwrap();
        assert_eq!(s.category, 0);
    }

    #[test]
    fn icao24_is_normalized() {
        let mut row = example_row();
        row[0] = json!("  406B93 ");
        assert_eq!(parse_state_row(&row).unwrap().icao24, "406b93");
    }

    #[test]
    fn wrong_type_and_range_rejected() {
        let mut row = example_row();
        row[9] = json!("fast");
        assert_eq!(parse_state_row(&row), Err(ParseError::BadType { field: "velocity" }));
        let mut row = example_row();
        row[6] = json!(91.0);
        assert!(matches!(parse_state_row(&row), Err(ParseError::OutOfRange("latitude", _))));
    }

    #[test]
    fn duplicate_icao_keeps_latest_contact() {
        let a = parse_state_row(&example_row()).unwrap();
        let mut b = a.clone();
        b.last_contact += 5.0;
        let r = ExtractResult::from_states(0.0, vec![a, b.clone()]);
        assert_eq!(r.states().unwrap(), &[b]);
        assert_eq!(ExtractResult::from_states(0.0, vec![]).outcome, ExtractOutcome::Empty);
    }

    #[test]
    fn response_body_parsing() {
        let body = json!({"time": 1716300010, "states": [example_row()]}).to_string();
        let r = parse_states_response(&body, 0.0).unwrap();
        assert_eq!(r.fetched_at, 1716300010.0);
        assert_eq!(r.states().unwrap().len(), 1);

        let empty = parse_states_response(r#"{"time": 5, "states": null}"#, 0.0).unwrap();
        assert_eq!(empty.outcome, ExtractOutcome::Empty);

        assert!(parse_states_response("<html>", 0.0).is_err());
        assert!(parse_states_response(r#"{"time":1,"states":[["",null]]}"#, 0.0).is_err());
    }

    #[test]
    fn bbox_validation() {
        assert!(BoundingBox::new(50.0, 49.0, 0.0, 1.0).is_err());
        assert!(BoundingBox::new(49.0, 50.0, 1.0, 1.0).is_err());
        assert!(BoundingBox::UK.validate().is_ok());
        assert!(BoundingBox::UK.contains(51.47, -0.46));
        assert!(!BoundingBox::UK.contains(40.0, -0.46));
    }

    pub(crate) fn arb_state() -> impl Strategy<Value = AircraftState> {
        let opt = |r: std::ops::Range<f64>| proptest::option::of(r);
        (
            "[0-9a-f]{6}",
            proptest::option::of("[A-Z]{3}[0-9]{1,4}"),
            "[A-Za-z ]{0,12}",
            (opt(1.6e9..1.8e9), 0.0..100.0f64),
            (opt(-180.0..180.0), opt(-90.0..90.0), opt(-500.0..15000.0)),
            (any::<bool>(), opt(0.0..350.0), opt(0.0..360.0), opt(-40.0..40.0), opt(-500.0..15000.0)),
            (any::<bool>(), 0u8..20),
        )
            .prop_map(
                |(icao24, callsign, country, (tp, lag), (lon, lat, baro), (og, v, tt, vr, geo), (spi, cat))| {
                    AircraftState {
                        icao24,
                        callsign,
                        origin_country: country,
                        time_position: tp,
                        last_contact: tp.unwrap_or(1.7e9) + lag,
                        longitude: lon,
                        latitude: lat,
                        baro_altitude: baro,
                        on_ground: og,
                        velocity: v,
                        true_track: tt,
                        vertical_rate: vr,
                        geo_altitude: geo,
                        spi,
                        category: cat,
                    }
                },
            )
    }

    proptest! {
        #[test]
        fn row_round_trip(s in arb_state()) {
            let back = parse_state_row(&serialize_state_row(&s)).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
