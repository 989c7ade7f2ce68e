//! Evaluation: clustering accuracy and change rate across projections,
//! latency and projection benches, and their CSV outputs.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::clustering::{match_clusters, select_k, KMeansConfig, KRange};
use crate::exec::{mix_seed, ExecMode};
use crate::features::{extract_features, fit_minmax, transform, ScalerParams};
use crate::ingest::{synth_tick, AircraftState, FleetParams, SyntheticSource};
use crate::pipeline::{TickConfig, TickContext};
use crate::projection::{project_all, ProjectionConfig};
use crate::recommend::CoreNetworkRegistry;
use crate::store::Store;
use crate::EpochSeconds;

/// Median by linear interpolation; `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    percentile(values, 50.0)
}

/// `p`-th percentile (0..=100) with linear interpolation between closest
/// ranks; `None` for an empty slice.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p.clamp(0.0, 100.0) / 100.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64))
}

/// Raw counts behind accuracy and change rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentComparison {
    /// Aircraft present in both assignments.
    pub common: usize,
    /// Common aircraft whose aligned labels agree.
    pub agree: usize,
    /// Aircraft only present in the compared (new) assignment.
    pub new: usize,
}

impl AssignmentComparison {
    pub fn changed(&self) -> usize {
        self.common - self.agree
    }

    /// `agree / common`, derived from the change rate so that
    /// `accuracy + change_rate / 100 == 1` holds exactly in f64 (the two
    /// may differ from a direct division by one ulp).
    pub fn accuracy(&self) -> Option<f64> {
        self.change_rate().map(|rate| 1.0 - rate / 100.0)
    }

    pub fn change_rate(&self) -> Option<f64> {
        (self.common > 0).then(|| 100.0 * self.changed() as f64 / self.common as f64)
    }

    pub fn merge(self, other: AssignmentComparison) -> AssignmentComparison {
        AssignmentComparison {
            common: self.common + other.common,
            agree: self.agree + other.agree,
            new: self.new + other.new,
        }
    }
}

/// Compares two assignments keyed by icao24. `identity[l]` maps label `l`
/// of `compared` onto a label of `reference` (`None`: no counterpart, so
/// every such aircraft counts as changed).
pub fn compare_assignments(
    reference: &BTreeMap<String, usize>,
    compared: &BTreeMap<String, usize>,
    identity: &[Option<usize>],
) -> AssignmentComparison {
    let mut c = AssignmentComparison::default();
    for (icao, &label) in compared {
        match reference.get(icao) {
            Some(&want) => {
                c.common += 1;
                if identity.get(label).copied().flatten() == Some(want) {
                    c.agree += 1;
                }
            }
            None => c.new += 1,
        }
    }
    c
}

/// Fraction of common aircraft whose projected cluster, mapped through
/// `identity`, equals the actual one. `None` without common aircraft.
pub fn clustering_accuracy(
    projected: &BTreeMap<String, usize>,
    actual: &BTreeMap<String, usize>,
    identity: &[Option<usize>],
) -> Option<f64> {
    compare_assignments(actual, projected, identity).accuracy()
}

/// Percentage of common aircraft whose cluster differs from the baseline.
pub fn cluster_change_rate(
    baseline: &BTreeMap<String, usize>,
    new: &BTreeMap<String, usize>,
    identity: &[Option<usize>],
) -> Option<f64> {
    compare_assignments(baseline, new, identity).change_rate()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySample {
    pub tick_time: EpochSeconds,
    pub n_aircraft: usize,
    pub rep: usize,
    pub preprocessing_ms: f64,
    pub decision_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub n: usize,
    pub reps: usize,
    pub preprocessing_ms_median: f64,
    pub decision_ms_median: f64,
    pub total_ms_median: f64,
    pub total_ms_p95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBench {
    pub samples: Vec<LatencySample>,
    pub stats: Vec<LatencyStats>,
}

/// Runs `reps` consecutive full ticks (10 s apart) on a synthetic fleet of
/// each size in `n_list`.
pub fn bench_latency(n_list: &[usize], reps: usize, seed: u64, exec: ExecMode) -> LatencyBench {
    let mut samples = Vec::new();
    let mut stats = Vec::new();
    for &n in n_list {
        let fleet = FleetParams { n, seed, ..FleetParams::default() }.build();
        let epoch = fleet.epoch;
        let config =
            TickConfig { seed, kmeans: KMeansConfig { exec, ..KMeansConfig::default() }, ..TickConfig::default() };
        let mut ctx = TickContext::new(
            Box::new(SyntheticSource::new(fleet)),
            Store::new().shared(),
            CoreNetworkRegistry::uk_default(),
            config,
        );
        let mut rows = Vec::with_capacity(reps);
        for rep in 0..reps {
            let t = epoch + 10.0 * rep as f64;
            let snapshot = ctx.tick(t).expect("synthetic ticks advance");
            let l = snapshot.latency;
            rows.push(LatencySample {
                tick_time: t,
                n_aircraft: snapshot.records.len(),
                rep,
                preprocessing_ms: l.preprocessing_ms,
                decision_ms: l.decision_ms,
                total_ms: l.total_ms,
            });
        }
        if !rows.is_empty() {
            let col = |f: fn(&LatencySample) -> f64| rows.iter().map(f).collect::<Vec<_>>();
            let total = col(|s| s.total_ms);
            stats.push(LatencyStats {
                n,
                reps,
                preprocessing_ms_median: median(&col(|s| s.preprocessing_ms)).expect("non-empty"),
                decision_ms_median: median(&col(|s| s.decision_ms)).expect("non-empty"),
                total_ms_median: median(&total).expect("non-empty"),
                total_ms_p95: percentile(&total, 95.0).expect("non-empty"),
            });
        }
        samples.extend(rows);
    }
    LatencyBench { samples, stats }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionEvalPoint {
    pub delta_t_s: f64,
    pub accuracy: Option<f64>,
    pub change_rate_pct: Option<f64>,
    pub n_common: usize,
    pub n_new: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBenchConfig {
    /// Fleet template; every trial reseeds it and anchors it at `epoch`.
    pub fleet: FleetParams,
    pub trials: usize,
    pub seed: u64,
    pub k_range: KRange,
    pub exec: ExecMode,
}

impl Default for ProjectionBenchConfig {
    fn default() -> Self {
        ProjectionBenchConfig {
            fleet: FleetParams { n: 200, accel_noise_std: 1.0, ..FleetParams::default() },
            trials: 32,
            seed: 42,
            k_range: KRange::default(),
            exec: ExecMode::default(),
        }
    }
}

struct Clustered {
    scaler: ScalerParams,
    labels: BTreeMap<String, usize>,
    centroids_raw: Vec<f64>,
    dim: usize,
}

fn cluster_states(states: &[AircraftState], at: EpochSeconds, k_range: KRange, seed: u64) -> Option<Clustered> {
    let proj_cfg = ProjectionConfig { t_max_s: f64::INFINITY, ..ProjectionConfig::default() };
    let (projected, _) = project_all(states, at, &proj_cfg, false, ExecMode::Sequential);
    let m = extract_features(&projected).ok()?;
    let scaler = fit_minmax(&m).ok()?;
    let scaled = transform(&scaler, &m).ok()?;
    let cfg = KMeansConfig { exec: ExecMode::Sequential, ..KMeansConfig::default() };
    let model = select_k(&scaled, k_range, seed, &cfg).ok()?;
    let centroids_raw = model.centroids.chunks_exact(model.dim).flat_map(|c| scaler.unscale_row(c)).collect();
    let labels = m.keys().iter().cloned().zip(model.assignments.iter().copied()).collect();
    Some(Clustered { scaler, labels, centroids_raw, dim: model.dim })
}

/// Clusters the fleet dead-reckoned from `t0` to `t0 + Δt` and the fleet's
/// actual state at `t0 + Δt` with the same seed, aligns the two labelings by
/// centroid matching, and reports accuracy pooled over all trials.
pub fn bench_projection(delta_ts: &[f64], cfg: &ProjectionBenchConfig) -> Vec<ProjectionEvalPoint> {
    let jobs: Vec<(usize, usize)> =
        (0..cfg.trials).flat_map(|trial| (0..delta_ts.len()).map(move |i| (trial, i))).collect();
    let results = cfg.exec.map(&jobs, |&(trial, i)| {
        let params =
            FleetParams { seed: mix_seed(cfg.seed, trial as u64, 0x9E07), jitter_max_s: 0.0, ..cfg.fleet.clone() };
        let fleet = params.build();
        let t0 = fleet.epoch;
        let t1 = t0 + delta_ts[i];
        let base = synth_tick(&fleet, t0).states().map(<[_]>::to_vec).unwrap_or_default();
        let actual_states = synth_tick(&fleet, t1).states().map(<[_]>::to_vec).unwrap_or_default();
        let seed = mix_seed(cfg.seed, trial as u64, 0xC1);
        let (Some(actual), Some(projected)) =
            (cluster_states(&actual_states, t1, cfg.k_range, seed), cluster_states(&base, t1, cfg.k_range, seed))
        else {
            return AssignmentComparison::default();
        };
        let rescale =
            |c: &[f64]| -> Vec<f64> { c.chunks_exact(actual.dim).flat_map(|r| actual.scaler.scale_row(r)).collect() };
        let identity = match_clusters(&rescale(&actual.centroids_raw), &rescale(&projected.centroids_raw), actual.dim);
        compare_assignments(&actual.labels, &projected.labels, &identity)
    });
    delta_ts
        .iter()
        .enumerate()
        .map(|(i, &dt)| {
            let pooled = jobs
                .iter()
                .zip(&results)
                .filter(|((_, j), _)| *j == i)
                .fold(AssignmentComparison::default(), |acc, (_, c)| acc.merge(*c));
            ProjectionEvalPoint {
                delta_t_s: dt,
                accuracy: pooled.accuracy(),
                change_rate_pct: pooled.change_rate(),
                n_common: pooled.common,
                n_new: pooled.new,
            }
        })
        .collect()
}

/// Latency samples as CSV: `n,rep,preprocessing_ms,decision_ms,total_ms`.
pub fn write_latency_csv<W: Write>(samples: &[LatencySample], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "rep", "preprocessing_ms", "decision_ms", "total_ms"])?;
    for s in samples {
        w.write_record([
            s.n_aircraft.to_string(),
            s.rep.to_string(),
            format!("{:.3}", s.preprocessing_ms),
            format!("{:.3}", s.decision_ms),
            format!("{:.3}", s.total_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Projection study as CSV:
/// `delta_t_s,accuracy,change_rate_pct,n_common,n_new`.
pub fn write_projection_csv<W: Write>(points: &[ProjectionEvalPoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["delta_t_s", "accuracy", "change_rate_pct", "n_common", "n_new"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in points {
        w.write_record([
            p.delta_t_s.to_string(),
            opt(p.accuracy),
            opt(p.change_rate_pct),
            p.n_common.to_string(),
            p.n_new.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    fn ten(changed: usize) -> (BTreeMap<String, usize>, BTreeMap<String, usize>) {
        let a: BTreeMap<String, usize> = (0..10).map(|i| (format!("a{i}"), i % 2)).collect();
        let mut b = a.clone();
        for i in 0..changed {
            *b.get_mut(&format!("a{i}")).unwrap() ^= 1;
        }
        (a, b)
    }

    #[test]
    fn hand_examples() {
        let id = [Some(0), Some(1)];
        let (a, b) = ten(0);
        assert_eq!(clustering_accuracy(&b, &a, &id), Some(1.0));
        assert_eq!(cluster_change_rate(&a, &b, &id), Some(0.0));
        let (a, b) = ten(1);
        assert_eq!(clustering_accuracy(&b, &a, &id), Some(0.9));
        let (a, b) = ten(2);
        assert_eq!(cluster_change_rate(&a, &b, &id), Some(20.0));
    }

    #[test]
    fn labels_are_aligned_through_identity() {
        let a = labels(&[("x", 0), ("y", 1)]);
        let b = labels(&[("x", 1), ("y", 0)]);
        assert_eq!(clustering_accuracy(&b, &a, &[Some(1), Some(0)]), Some(1.0));
        assert_eq!(clustering_accuracy(&b, &a, &[Some(0), None]), Some(0.0));
    }

    #[test]
    fn new_aircraft_counted_separately() {
        let a = labels(&[("x", 0)]);
        let b = labels(&[("x", 0), ("z", 0)]);
        let c = compare_assignments(&a, &b, &[Some(0)]);
        assert_eq!(c, AssignmentComparison { common: 1, agree: 1, new: 1 });
        assert_eq!(clustering_accuracy(&labels(&[("q", 0)]), &a, &[Some(0)]), None);
    }

    #[test]
    fn percentiles() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), Some(2.5));
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 95.0), Some(4.8));
    }

    #[test]
    fn latency_bench_contract() {
        let bench = bench_latency(&[50], 3, 42, ExecMode::Sequential);
        assert_eq!(bench.samples.len(), 3);
        assert_eq!(bench.stats.len(), 1);
        assert!(bench.samples.iter().all(|s| s.preprocessing_ms + s.decision_ms <= s.total_ms));
        let mut csv = Vec::new();
        write_latency_csv(&bench.samples, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("n,rep,preprocessing_ms,decision_ms,total_ms\n50,0,"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn projection_csv_header() {
        let p = ProjectionEvalPoint {
            delta_t_s: 10.0,
            accuracy: Some(0.5),
            change_rate_pct: Some(50.0),
            n_common: 4,
            n_new: 0,
        };
        let mut csv = Vec::new();
        write_projection_csv(&[p], &mut csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            "delta_t_s,accuracy,change_rate_pct,n_common,n_new\n10,0.5,50,4,0\n"
        );
    }
}
