use std::collections::VecDeque;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{Latency, SnapshotProvenance, TwinSnapshot};
use crate::metrics::{median, percentile};

const LATENCY_WINDOW: usize = 1024;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub preprocessing_ms_median: f64,
    pub decision_ms_median: f64,
    pub total_ms_median: f64,
    pub total_ms_p95: f64,
}

/// Counters exposed by the metrics endpoint. All counters only grow.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsView {
    pub ticks: u64,
    pub fallback_ticks: u64,
    pub skipped_ticks: u64,
    pub degraded_ticks: u64,
    pub errors: u64,
    pub last_tick_time: Option<f64>,
    pub latency: LatencySummary,
    pub last_error: Option<String>,
}

#[derive(Debug, Default)]
struct Counters {
    view: MetricsView,
    window: VecDeque<Latency>,
}

/// Shared read side of a running pipeline: the latest snapshot and the
/// run counters. Cloning is cheap.
#[derive(Debug, Clone, Default)]
pub struct TwinHandle {
    latest: Arc<RwLock<Option<Arc<TwinSnapshot>>>>,
    counters: Arc<Mutex<Counters>>,
}

impl TwinHandle {
    pub fn new() -> Self {
        TwinHandle::default()
    }

    pub fn latest(&self) -> Option<Arc<TwinSnapshot>> {
        self.latest.read().expect("snapshot cell poisoned").clone()
    }

    /// Publishes a completed tick. Older snapshots never replace newer ones.
    pub fn publish(&self, snapshot: Arc<TwinSnapshot>) {
        {
            let mut c = self.counters.lock().expect("counters poisoned");
            let v = &mut c.view;
            v.ticks += 1;
            if snapshot.provenance == SnapshotProvenance::ProjectedFallback {
                v.fallback_ticks += 1;
            }
            if let Some(reason) = snapshot.degraded {
                v.degraded_ticks += 1;
                v.last_error = Some(format!("degraded tick at {}: {reason:?}", snapshot.tick_time));
            }
            v.last_tick_time = Some(snapshot.tick_time);
            if !snapshot.is_degraded() {
                if c.window.len() == LATENCY_WINDOW {
                    c.window.pop_front();
                }
                c.window.push_back(snapshot.latency);
                let pick = |f: fn(&Latency) -> f64| c.window.iter().map(f).collect::<Vec<f64>>();
                let total = pick(|l| l.total_ms);
                let summary = LatencySummary {
                    count: c.window.len(),
                    preprocessing_ms_median: median(&pick(|l| l.preprocessing_ms)).unwrap_or(0.0),
                    decision_ms_median: median(&pick(|l| l.decision_ms)).unwrap_or(0.0),
                    total_ms_median: median(&total).unwrap_or(0.0),
                    total_ms_p95: percentile(&total, 95.0).unwrap_or(0.0),
                };
                c.view.latency = summary;
            }
        }
        let mut latest = self.latest.write().expect("snapshot cell poisoned");
        if latest.as_ref().is_none_or(|cur| cur.tick_time < snapshot.tick_time) {
            *latest = Some(snapshot);
        }
    }

    pub fn record_skipped(&self, n: u64) {
        self.counters.lock().expect("counters poisoned").view.skipped_ticks += n;
    }

    pub fn record_error(&self, message: String) {
        let mut c = self.counters.lock().expect("counters poisoned");
        c.view.errors += 1;
        c.view.last_error = Some(message);
    }

    pub fn metrics(&self) -> MetricsView {
        self.counters.lock().expect("counters poisoned").view.clone()
    }
}
