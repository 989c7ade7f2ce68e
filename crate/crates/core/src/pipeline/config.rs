use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{KMeansConfig, KRange};
use crate::exec::ExecMode;
use crate::ingest::live::LiveConfig;
use crate::ingest::{
    BoundingBox, ExtractSource, FleetParams, LiveSource, ReplaySource, SyntheticFleetConfig, SyntheticSource,
};
use crate::projection::ProjectionConfig;
use crate::recommend::{CoreNetworkRegistry, DEFAULT_HYSTERESIS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Where a pipeline gets its state vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    /// A fleet file, or generated parameters when no file is given.
    Synth {
        #[serde(default)]
        fleet: Option<PathBuf>,
        #[serde(default)]
        generate: Option<FleetParams>,
    },
    Replay {
        path: PathBuf,
    },
    Live(LiveConfig),
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig::Synth { fleet: None, generate: None }
    }
}

impl SourceConfig {
    /// Parses the short CLI form: `synth`, `synth:<fleet.json>`,
    /// `replay:<trace.ndjson>`, `live` or `live:<base url>`.
    pub fn from_spec(spec: &str) -> Result<Self, ConfigError> {
        let (kind, arg) = match spec.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (spec, None),
        };
        match (kind, arg) {
            ("synth", None) => Ok(SourceConfig::default()),
            ("synth", Some(path)) if !path.is_empty() => {
                Ok(SourceConfig::Synth { fleet: Some(path.into()), generate: None })
            }
            ("replay", Some(path)) if !path.is_empty() => Ok(SourceConfig::Replay { path: path.into() }),
            ("live", None) => Ok(SourceConfig::Live(LiveConfig::default())),
            ("live", Some(url)) if !url.is_empty() => {
                Ok(SourceConfig::Live(LiveConfig { base_url: url.to_string(), ..LiveConfig::default() }))
            }
            _ => {
                Err(invalid(format!("bad source {spec:?}: expected synth[:fleet.json], replay:<trace> or live[:url]")))
            }
        }
    }

    /// Opens the source. `seed` seeds generated fleets that do not set their
    /// own.
    pub fn build(&self, seed: u64) -> Result<Box<dyn ExtractSource>, ConfigError> {
        if let Some(fleet) = self.synth_fleet(seed)? {
            return Ok(Box::new(SyntheticSource::new(fleet)));
        }
        Ok(match self {
            SourceConfig::Replay { path } => {
                Box::new(ReplaySource::open(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?)
            }
            SourceConfig::Live(live) => Box::new(LiveSource::new(live.clone())),
            SourceConfig::Synth { .. } => unreachable!("handled above"),
        })
    }

    /// The fleet a synthetic source would fly, so callers can re-anchor its
    /// epoch before building the source. `None` for other sources.
    pub fn synth_fleet(&self, seed: u64) -> Result<Option<SyntheticFleetConfig>, ConfigError> {
        match self {
            SourceConfig::Synth { fleet: Some(path), .. } => {
                SyntheticFleetConfig::load(path).map(Some).map_err(|e| invalid(format!("{}: {e}", path.display())))
            }
            SourceConfig::Synth { fleet: None, generate } => {
                Ok(Some(generate.clone().unwrap_or(FleetParams { seed, ..FleetParams::default() }).build()))
            }
            _ => Ok(None),
        }
    }

    fn min_interval_s(&self) -> f64 {
        match self {
            SourceConfig::Live(live) => live.min_interval_s,
            _ => 0.0,
        }
    }
}

/// Pipeline configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub interval_s: f64,
    pub bbox: BoundingBox,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub t_max_s: f64,
    pub hysteresis: f64,
    pub registry_path: Option<PathBuf>,
    pub source: SourceConfig,
    pub exec: ExecMode,
    /// Directory for the on-disk bucket logs; in-memory only when absent.
    pub store_dir: Option<PathBuf>,
    /// Optional retention window for both buckets.
    pub retention_s: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            interval_s: 10.0,
            bbox: BoundingBox::UK,
            k_min: 2,
            k_max: 10,
            seed: 42,
            t_max_s: 60.0,
            hysteresis: DEFAULT_HYSTERESIS,
            registry_path: None,
            source: SourceConfig::default(),
            exec: ExecMode::default(),
            store_dir: None,
            retention_s: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.interval_s.is_finite() && self.interval_s > 0.0) {
            return Err(invalid(format!("interval_s must be positive, got {}", self.interval_s)));
        }
        if self.interval_s < self.source.min_interval_s() {
            return Err(invalid(format!(
                "interval_s {} is below the source rate limit of {} s",
                self.interval_s,
                self.source.min_interval_s()
            )));
        }
        self.bbox.validate().map_err(|e| invalid(e.to_string()))?;
        if self.k_min < 1 || self.k_min > self.k_max {
            return Err(invalid(format!("need 1 <= k_min <= k_max, got {}..{}", self.k_min, self.k_max)));
        }
        if self.t_max_s.is_nan() || self.t_max_s <= 0.0 {
            return Err(invalid(format!("t_max_s must be positive, got {}", self.t_max_s)));
        }
        if !(0.0..1.0).contains(&self.hysteresis) {
            return Err(invalid(format!("hysteresis must lie in [0, 1), got {}", self.hysteresis)));
        }
        if matches!(self.retention_s, Some(r) if r.is_nan() || r <= 0.0) {
            return Err(invalid("retention_s must be positive"));
        }
        if let SourceConfig::Synth { fleet: Some(_), generate: Some(_) } = &self.source {
            return Err(invalid("synth source takes either `fleet` or `generate`"));
        }
        Ok(())
    }

    pub fn k_range(&self) -> KRange {
        KRange { min: self.k_min, max: self.k_max }
    }

    pub fn projection(&self) -> ProjectionConfig {
        ProjectionConfig { t_max_s: self.t_max_s, ..ProjectionConfig::default() }
    }

    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig { exec: self.exec, ..KMeansConfig::default() }
    }

    /// The configured registry file, or the built-in UK anchors.
    pub fn registry(&self) -> Result<CoreNetworkRegistry, ConfigError> {
        match &self.registry_path {
            Some(path) => CoreNetworkRegistry::load(path, self.hysteresis)
                .map_err(|e| invalid(format!("registry {}: {e}", path.display()))),
            None => {
                let uk = CoreNetworkRegistry::uk_default();
                CoreNetworkRegistry::new(uk.entries().to_vec(), self.hysteresis).map_err(|e| invalid(e.to_string()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
        let cfg = PipelineConfig::from_json("{}").unwrap();
        assert_eq!(cfg.interval_s, 10.0);
        assert_eq!(cfg.k_range(), KRange { min: 2, max: 10 });
    }

    #[test]
    fn full_file() {
        let cfg = PipelineConfig::from_json(
            r#"{"interval_s": 15, "bbox": {"lat_min": 50, "lat_max": 55, "lon_min": -5, "lon_max": 0},
                "k_min": 2, "k_max": 6, "seed": 7, "t_max_s": 90, "hysteresis": 0.1,
                "registry_path": null, "source": {"kind": "replay", "path": "trace.ndjson"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.source, SourceConfig::Replay { path: "trace.ndjson".into() });
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            r#"{"interval_s": 0}"#,
            r#"{"k_min": 5, "k_max": 3}"#,
            r#"{"hysteresis": 1.0}"#,
            r#"{"t_max_s": -1}"#,
            r#"{"bbox": {"lat_min": 60, "lat_max": 50, "lon_min": 0, "lon_max": 1}}"#,
            r#"{"source": {"kind": "live"}, "interval_s": 5}"#,
            r#"{"unknown": 1}"#,
            r#"{"interval_s": "ten"}"#,
        ] {
            assert!(PipelineConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn source_specs() {
        assert_eq!(SourceConfig::from_spec("synth").unwrap(), SourceConfig::default());
        assert_eq!(
            SourceConfig::from_spec("synth:fleet.json").unwrap(),
            SourceConfig::Synth { fleet: Some("fleet.json".into()), generate: None }
        );
        assert_eq!(
            SourceConfig::from_spec("replay:a.ndjson").unwrap(),
            SourceConfig::Replay { path: "a.ndjson".into() }
        );
        assert!(
            matches!(SourceConfig::from_spec("live:http://x").unwrap(), SourceConfig::Live(l) if l.base_url == "http://x")
        );
        assert!(SourceConfig::from_spec("replay").is_err());
        assert!(SourceConfig::from_spec("kafka:x").is_err());
    }
}
