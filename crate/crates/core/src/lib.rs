//! Digital twin pipeline for core network selection in aeronautical ad-hoc
//! networks.
//!
//! Each tick extracts aircraft state vectors from a source (live REST, a
//! recorded trace or a synthetic fleet), falls back to the last stored
//! records when the source returns nothing, dead-reckons every aircraft to
//! the tick time, scales position features to `[0, 1]`, picks the number of
//! clusters by BIC, clusters with k-means and recommends a core network per
//! cluster. Raw states land in the `Physical` bucket, twin records in `DT`.

pub mod clustering;
pub mod exec;
pub mod features;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod projection;
pub mod recommend;
pub mod store;
pub mod view;

pub use exec::ExecMode;

/// Seconds since the Unix epoch. Fractional parts are meaningful for
/// synthetic sources and projection targets.
pub type EpochSeconds = f64;

/// Converts epoch seconds to the nanosecond timestamps used by the store.
pub fn seconds_to_nanos(t: EpochSeconds) -> i64 {
    (t * 1e9).round() as i64
}

pub fn nanos_to_seconds(ns: i64) -> EpochSeconds {
    ns as f64 / 1e9
}
