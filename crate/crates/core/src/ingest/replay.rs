//! Recorded-trace source.
//!
//! A trace is newline-delimited JSON, one record per tick:
//!
//! ```text
//! {"t": 1716300000, "states": [{"icao24": "406b93", "last_contact": ..., ...}]}
//! {"t": 1716300010, "fail": "timeout"}
//! ```
//!
//! `fail` accepts `timeout`, `http` (503), `http:<code>`, `parse`,
//! `exhausted` and `empty`.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AircraftState, BoundingBox, ExtractResult, ExtractSource, FailureReason};
use crate::EpochSeconds;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("reading trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {message}")]
    Invalid { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceRecord {
    States { t: EpochSeconds, states: Vec<AircraftState> },
    Fail { t: EpochSeconds, kind: FailKind },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FailKind {
    Failed(FailureReason),
    Empty,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    t: EpochSeconds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    states: Option<Vec<AircraftState>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fail: Option<String>,
}

fn parse_fail(kind: &str) -> Option<FailKind> {
    Some(match kind {
        "timeout" => FailKind::Failed(FailureReason::Timeout),
        "http" => FailKind::Failed(FailureReason::HttpError(503)),
        "parse" => FailKind::Failed(FailureReason::ParseError),
        "exhausted" => FailKind::Failed(FailureReason::SourceExhausted),
        "empty" => FailKind::Empty,
        other => {
            let code = other.strip_prefix("http:")?.parse().ok()?;
            FailKind::Failed(FailureReason::HttpError(code))
        }
    })
}

fn fail_name(kind: FailKind) -> String {
    match kind {
        FailKind::Empty => "empty".into(),
        FailKind::Failed(FailureReason::Timeout) => "timeout".into(),
        FailKind::Failed(FailureReason::HttpError(code)) => format!("http:{code}"),
        FailKind::Failed(FailureReason::ParseError) => "parse".into(),
        FailKind::Failed(FailureReason::SourceExhausted) => "exhausted".into(),
    }
}

impl TraceRecord {
    pub fn time(&self) -> EpochSeconds {
        match self {
            TraceRecord::States { t, .. } | TraceRecord::Fail { t, .. } => *t,
        }
    }

    fn from_raw(raw: RawRecord, line: usize) -> Result<Self, TraceError> {
        let invalid = |message: String| TraceError::Invalid { line, message };
        match (raw.states, raw.fail) {
            (Some(states), None) => {
                for s in &states {
                    s.validate().map_err(|e| invalid(format!("state {}: {e}", s.icao24)))?;
                }
                Ok(TraceRecord::States { t: raw.t, states })
            }
            (None, Some(kind)) => parse_fail(&kind)
                .map(|kind| TraceRecord::Fail { t: raw.t, kind })
                .ok_or_else(|| invalid(format!("unknown failure kind {kind:?}"))),
            (Some(_), Some(_)) => Err(invalid("record has both states and fail".into())),
            (None, None) => Err(invalid("record has neither states nor fail".into())),
        }
    }

    fn to_raw(&self) -> RawRecord {
        match self {
            TraceRecord::States { t, states } => RawRecord { t: *t, states: Some(states.clone()), fail: None },
            TraceRecord::Fail { t, kind } => RawRecord { t: *t, states: None, fail: Some(fail_name(*kind)) },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayTrace {
    records: Vec<TraceRecord>,
}

impl ReplayTrace {
    pub fn new(records: Vec<TraceRecord>) -> Self {
        ReplayTrace { records }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_reader(reader: impl Read) -> Result<Self, TraceError> {
        let mut records = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord =
                serde_json::from_str(&line).map_err(|e| TraceError::Invalid { line: i + 1, message: e.to_string() })?;
            records.push(TraceRecord::from_raw(raw, i + 1)?);
        }
        Ok(ReplayTrace { records })
    }

    pub fn from_ndjson(text: &str) -> Result<Self, TraceError> {
        Self::from_reader(text.as_bytes())
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(&r.to_raw()).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Position in a trace, always on a record boundary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReplayCursor(pub usize);

/// Returns the record under `cursor` and advances it.
pub fn replay_tick(trace: &ReplayTrace, cursor: &mut ReplayCursor) -> ExtractResult {
    let Some(record) = trace.records.get(cursor.0) else {
        let t = trace.records.last().map_or(0.0, TraceRecord::time);
        return ExtractResult::failed(t, FailureReason::SourceExhausted);
    };
    cursor.0 += 1;
    match record {
        TraceRecord::States { t, states } => ExtractResult::from_states(*t, states.clone()),
        TraceRecord::Fail { t, kind: FailKind::Empty } => ExtractResult::empty(*t),
        TraceRecord::Fail { t, kind: FailKind::Failed(reason) } => ExtractResult::failed(*t, *reason),
    }
}

pub struct ReplaySource {
    trace: ReplayTrace,
    cursor: ReplayCursor,
    label: String,
}

impl ReplaySource {
    pub fn new(trace: ReplayTrace) -> Self {
        ReplaySource { trace, cursor: ReplayCursor::default(), label: "replay".into() }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        let label = format!("replay:{}", path.as_ref().display());
        Ok(ReplaySource { label, ..Self::new(ReplayTrace::open(path)?) })
    }

    pub fn cursor(&self) -> ReplayCursor {
        self.cursor
    }
}

impl ExtractSource for ReplaySource {
    /// Replays verbatim: neither `bbox` nor `now` influence the record.
    fn fetch(&mut self, _bbox: &BoundingBox, _now: EpochSeconds) -> ExtractResult {
        replay_tick(&self.trace, &mut self.cursor)
    }

    fn next_tick_hint(&self) -> Option<EpochSeconds> {
        self.trace.records.get(self.cursor.0).map(TraceRecord::time)
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}
