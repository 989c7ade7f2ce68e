//! Embedded time-series store with a `Physical` bucket for measured states
//! and a `DT` bucket for twin records.

mod line;
mod schema;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use line::{decode_line, encode_line, DecodeError, FieldValue, LinePoint, PointBuilder, PointError};
pub use schema::{
    point_time, point_to_state, state_to_point, RECOMMENDATION_MEASUREMENT, STATE_MEASUREMENT, TICK_MEASUREMENT,
    TWIN_MEASUREMENT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Bucket {
    Physical,
    #[serde(rename = "DT")]
    Dt,
}

impl Bucket {
    pub const ALL: [Bucket; 2] = [Bucket::Physical, Bucket::Dt];

    pub fn name(self) -> &'static str {
        match self {
            Bucket::Physical => "Physical",
            Bucket::Dt => "DT",
        }
    }

    fn log_file(self) -> &'static str {
        match self {
            Bucket::Physical => "physical.lp",
            Bucket::Dt => "dt.lp",
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Bucket {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "physical" => Ok(Bucket::Physical),
            "dt" => Ok(Bucket::Dt),
            other => Err(format!("unknown bucket {other:?} (expected physical or dt)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("Physical bucket only accepts measured points (got provenance={0})")]
    ProjectedInPhysical(String),
    #[error("twin point for {icao24} missing field {field}")]
    MissingTwinField { icao24: String, field: &'static str },
    #[error("log {path}:{line}: {source}")]
    Corrupt { path: PathBuf, line: usize, source: DecodeError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

type SeriesKey = (String, Vec<(String, String)>);

#[derive(Debug, Default)]
struct BucketData {
    series: BTreeMap<SeriesKey, BTreeMap<i64, LinePoint>>,
    points: usize,
}

impl BucketData {
    fn insert(&mut self, p: LinePoint) {
        let (measurement, tags, fields, ts) = p.clone().into_parts();
        let series = self.series.entry((measurement, tags)).or_default();
        match series.get_mut(&ts) {
            Some(existing) => existing.merge_fields(fields),
            None => {
                series.insert(ts, p);
                self.points += 1;
            }
        }
    }

    fn evict_before(&mut self, cutoff: i64) -> usize {
        let mut removed = 0;
        for points in self.series.values_mut() {
            let keep = points.split_off(&cutoff);
            removed += points.len();
            *points = keep;
        }
        self.series.retain(|_, p| !p.is_empty());
        self.points -= removed;
        removed
    }
}

fn icao_of(p: &LinePoint) -> &str {
    p.tag("icao24").unwrap_or("")
}

/// In-memory buckets with an optional append-only line-protocol log.
#[derive(Debug, Default)]
pub struct Store {
    physical: BucketData,
    dt: BucketData,
    logs: Option<(PathBuf, BTreeMap<Bucket, BufWriter<File>>)>,
    max_age_ns: Option<i64>,
}

pub type SharedStore = Arc<RwLock<Store>>;

impl Store {
    pub fn new() -> Self {
        Store::default()
    }

    pub fn shared(self) -> SharedStore {
        Arc::new(RwLock::new(self))
    }

    /// Opens a store persisted under `dir`, replaying any existing logs.
    /// Subsequent writes are appended to `physical.lp` and `dt.lp`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut store = Store::new();
        let mut writers = BTreeMap::new();
        for bucket in Bucket::ALL {
            let path = dir.join(bucket.log_file());
            if path.exists() {
                let reader = BufReader::new(File::open(&path)?);
                for (i, line) in reader.lines().enumerate() {
                    let line = line?;
                    if line.is_empty() {
                        continue;
                    }
                    let p = decode_line(&line).map_err(|source| StoreError::Corrupt {
                        path: path.clone(),
                        line: i + 1,
                        source,
                    })?;
                    store.data_mut(bucket).insert(p);
                }
            }
            let file = OpenOptions::new().create(true).append(true).open(&path)?;
            writers.insert(bucket, BufWriter::new(file));
        }
        store.logs = Some((dir, writers));
        Ok(store)
    }

    /// Keeps only points younger than `max_age_s` relative to the newest
    /// write timestamp. Off by default.
    pub fn with_max_age(mut self, max_age_s: f64) -> Self {
        self.max_age_ns = Some(crate::seconds_to_nanos(max_age_s));
        self
    }

    pub fn log_dir(&self) -> Option<&Path> {
        self.logs.as_ref().map(|(d, _)| d.as_path())
    }

    fn data(&self, bucket: Bucket) -> &BucketData {
        match bucket {
            Bucket::Physical => &self.physical,
            Bucket::Dt => &self.dt,
        }
    }

    fn data_mut(&mut self, bucket: Bucket) -> &mut BucketData {
        match bucket {
            Bucket::Physical => &mut self.physical,
            Bucket::Dt => &mut self.dt,
        }
    }

    fn check(bucket: Bucket, p: &LinePoint) -> Result<(), StoreError> {
        match bucket {
            Bucket::Physical => match p.tag("provenance") {
                Some(prov) if prov != "measured" => Err(StoreError::ProjectedInPhysical(prov.to_string())),
                _ => Ok(()),
            },
            Bucket::Dt if p.measurement() == TWIN_MEASUREMENT => {
                let missing = |field| StoreError::MissingTwinField { icao24: icao_of(p).to_string(), field };
                let clustered =
                    p.field("clustered").and_then(FieldValue::as_bool).ok_or_else(|| missing("clustered"))?;
                if clustered {
                    for field in ["cluster", "cluster_identity", "recommendation"] {
                        if p.field(field).is_none() {
                            return Err(missing(field));
                        }
                    }
                }
                Ok(())
            }
            Bucket::Dt => Ok(()),
        }
    }

    /// Writes a batch. Either every point is accepted or none is. Points
    /// that share measurement, tag set and timestamp with a stored point are
    /// merged field by field (last write wins).
    pub fn write_points(&mut self, bucket: Bucket, points: &[LinePoint]) -> Result<usize, StoreError> {
        for p in points {
            Self::check(bucket, p)?;
        }
        if let Some((_, writers)) = &mut self.logs {
            let w = writers.get_mut(&bucket).expect("writer per bucket");
            for p in points {
                writeln!(w, "{}", encode_line(p))?;
            }
            w.flush()?;
        }
        let data = self.data_mut(bucket);
        for p in points {
            data.insert(p.clone());
        }
        if let (Some(age), Some(newest)) = (self.max_age_ns, points.iter().map(LinePoint::timestamp).max()) {
            self.evict_before(newest.saturating_sub(age));
        }
        Ok(points.len())
    }

    /// Drops every point older than `cutoff_ns` from both buckets.
    pub fn evict_before(&mut self, cutoff_ns: i64) -> usize {
        self.physical.evict_before(cutoff_ns) + self.dt.evict_before(cutoff_ns)
    }

    /// Number of distinct stored points.
    pub fn len(&self, bucket: Bucket) -> usize {
        self.data(bucket).points
    }

    pub fn is_empty(&self, bucket: Bucket) -> bool {
        self.len(bucket) == 0
    }

    /// Latest point per icao24 with timestamp `<= before_ns`.
    pub fn last_records(&self, bucket: Bucket, measurement: &str, before_ns: i64) -> BTreeMap<String, LinePoint> {
        let mut out: BTreeMap<String, LinePoint> = BTreeMap::new();
        for ((m, _), points) in &self.data(bucket).series {
            if m != measurement {
                continue;
            }
            let Some((_, p)) = points.range(..=before_ns).next_back() else {
                continue;
            };
            let Some(icao) = p.tag("icao24") else {
                continue;
            };
            match out.get(icao) {
                Some(cur) if cur.timestamp() >= p.timestamp() => {}
                _ => {
                    out.insert(icao.to_string(), p.clone());
                }
            }
        }
        out
    }

    /// Points with `start_ns <= ts < end_ns`, ordered by timestamp, then
    /// icao24, then series key.
    pub fn query_range(&self, bucket: Bucket, measurement: &str, start_ns: i64, end_ns: i64) -> Vec<LinePoint> {
        if start_ns >= end_ns {
            return Vec::new();
        }
        let mut out: Vec<(&SeriesKey, &LinePoint)> = Vec::new();
        for (key, points) in &self.data(bucket).series {
            if key.0 == measurement {
                out.extend(points.range(start_ns..end_ns).map(|(_, p)| (key, p)));
            }
        }
        out.sort_by(|a, b| (a.1.timestamp(), icao_of(a.1), a.0).cmp(&(b.1.timestamp(), icao_of(b.1), b.0)));
        out.into_iter().map(|(_, p)| p.clone()).collect()
    }

    /// Every point of the bucket in canonical order (timestamp, measurement,
    /// tags).
    pub fn points(&self, bucket: Bucket) -> Vec<LinePoint> {
        let mut out: Vec<(&SeriesKey, &LinePoint)> =
            self.data(bucket).series.iter().flat_map(|(key, points)| points.values().map(move |p| (key, p))).collect();
        out.sort_by(|a, b| (a.1.timestamp(), a.0).cmp(&(b.1.timestamp(), b.0)));
        out.into_iter().map(|(_, p)| p.clone()).collect()
    }

    /// Canonical line-protocol dump of a bucket, one `\n`-terminated line
    /// per point. Two stores with the same contents export identical bytes.
    pub fn export_lines(&self, bucket: Bucket) -> String {
        let mut out = String::new();
        for p in self.points(bucket) {
            out.push_str(&encode_line(&p));
            out.push('\n');
        }
        out
    }

    /// Distinct timestamps of a measurement, ascending.
    pub fn timestamps(&self, bucket: Bucket, measurement: &str) -> Vec<i64> {
        let mut ts: Vec<i64> = self
            .data(bucket)
            .series
            .iter()
            .filter(|((m, _), _)| m == measurement)
            .flat_map(|(_, p)| p.keys().copied())
            .collect();
        ts.sort_unstable();
        ts.dedup();
        ts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(icao: &str, ts: i64, lon: f64) -> LinePoint {
        LinePoint::builder(STATE_MEASUREMENT)
            .tag("icao24", icao)
            .tag("provenance", "measured")
            .field("longitude", lon)
            .timestamp(ts)
            .build()
            .unwrap()
    }

    fn twin(icao: &str, ts: i64) -> LinePoint {
        LinePoint::builder(TWIN_MEASUREMENT)
            .tag("icao24", icao)
            .field("clustered", true)
            .field("cluster", 0i64)
            .field("cluster_identity", 0i64)
            .field("recommendation", "lon")
            .timestamp(ts)
            .build()
            .unwrap()
    }

    #[test]
    fn write_and_merge() {
        let mut s = Store::new();
        let pts = [twin("a", 1), twin("b", 1), twin("c", 2)];
        assert_eq!(s.write_points(Bucket::Dt, &pts).unwrap(), 3);
        assert_eq!(s.len(Bucket::Dt), 3);

        let mut s = Store::new();
        s.write_points(Bucket::Physical, &[state("a", 10, 1.0)]).unwrap();
        let extra = LinePoint::builder(STATE_MEASUREMENT)
            .tag("icao24", "a")
            .tag("provenance", "measured")
            .field("velocity", 200.0)
            .timestamp(10)
            .build()
            .unwrap();
        s.write_points(Bucket::Physical, &[extra]).unwrap();
        assert_eq!(s.len(Bucket::Physical), 1);
        let p = &s.points(Bucket::Physical)[0];
        assert_eq!(p.field("longitude"), Some(&FieldValue::Float(1.0)));
        assert_eq!(p.field("velocity"), Some(&FieldValue::Float(200.0)));
    }

    #[test]
    fn physical_rejects_projected() {
        let mut s = Store::new();
        let p = LinePoint::builder(STATE_MEASUREMENT)
            .tag("icao24", "a")
            .tag("provenance", "projected")
            .field("longitude", 1.0)
            .build()
            .unwrap();
        assert!(matches!(
            s.write_points(Bucket::Physical, &[state("b", 1, 0.0), p]),
            Err(StoreError::ProjectedInPhysical(_))
        ));
        assert!(s.is_empty(Bucket::Physical), "batch must be rejected atomically");
    }

    #[test]
    fn twin_requires_decision_fields() {
        let mut s = Store::new();
        let bad = LinePoint::builder(TWIN_MEASUREMENT).tag("icao24", "a").field("clustered", true).build().unwrap();
        assert!(matches!(
            s.write_points(Bucket::Dt, &[bad]),
            Err(StoreError::MissingTwinField { field: "cluster", .. })
        ));
        let unclustered =
            LinePoint::builder(TWIN_MEASUREMENT).tag("icao24", "a").field("clustered", false).build().unwrap();
        assert_eq!(s.write_points(Bucket::Dt, &[unclustered]).unwrap(), 1);
    }

    #[test]
    fn last_records_examples() {
        let mut s = Store::new();
        assert!(s.last_records(Bucket::Physical, STATE_MEASUREMENT, 100).is_empty());
        s.write_points(Bucket::Physical, &[state("a", 10, 1.0), state("a", 20, 2.0), state("b", 30, 3.0)]).unwrap();
        let at25 = s.last_records(Bucket::Physical, STATE_MEASUREMENT, 25);
        assert_eq!(at25.len(), 1);
        assert_eq!(at25["a"].timestamp(), 20);
        assert_eq!(s.last_records(Bucket::Physical, STATE_MEASUREMENT, 15)["a"].timestamp(), 10);
        assert_eq!(s.last_records(Bucket::Physical, STATE_MEASUREMENT, 30).len(), 2);
    }

    #[test]
    fn query_range_half_open() {
        let mut s = Store::new();
        s.write_points(Bucket::Physical, &[state("b", 10, 0.0), state("a", 10, 0.0), state("a", 20, 0.0)]).unwrap();
        let all = s.query_range(Bucket::Physical, STATE_MEASUREMENT, 0, 100);
        let order: Vec<(i64, &str)> = all.iter().map(|p| (p.timestamp(), icao_of(p))).collect();
        assert_eq!(order, vec![(10, "a"), (10, "b"), (20, "a")]);
        assert!(s.query_range(Bucket::Physical, STATE_MEASUREMENT, 10, 10).is_empty());
        assert_eq!(s.query_range(Bucket::Physical, STATE_MEASUREMENT, 0, 20).len(), 2);
    }

    #[test]
    fn eviction() {
        let mut s = Store::new().with_max_age(1e-8);
        s.write_points(Bucket::Physical, &[state("a", 10, 0.0)]).unwrap();
        s.write_points(Bucket::Physical, &[state("a", 100, 0.0)]).unwrap();
        assert_eq!(s.len(Bucket::Physical), 1);
        assert_eq!(s.points(Bucket::Physical)[0].timestamp(), 100);
    }

    #[test]
    fn log_replay() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = Store::open(dir.path()).unwrap();
            s.write_points(Bucket::Physical, &[state("a", 10, 1.5)]).unwrap();
            s.write_points(Bucket::Dt, &[twin("a", 10)]).unwrap();
        }
        let s = Store::open(dir.path()).unwrap();
        assert_eq!(s.len(Bucket::Physical), 1);
        assert_eq!(s.len(Bucket::Dt), 1);
        let text = fs::read_to_string(dir.path().join("physical.lp")).unwrap();
        assert_eq!(text, "state,icao24=a,provenance=measured longitude=1.5 10\n");
    }

    #[test]
    fn bucket_names() {
        assert_eq!("dt".parse::<Bucket>(), Ok(Bucket::Dt));
        assert_eq!("Physical".parse::<Bucket>(), Ok(Bucket::Physical));
        assert!("x".parse::<Bucket>().is_err());
    }
}
