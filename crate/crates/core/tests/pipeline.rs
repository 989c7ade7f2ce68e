use std::sync::Arc;

use proptest::prelude::*;
use serde_json::Value;
use skytwin_core::ingest::{
    synth_tick, FailKind, FailureReason, FleetParams, ReplaySource, ReplayTrace, SyntheticSource, TraceRecord,
};
use skytwin_core::pipeline::{
    run_loop, ManualClock, SnapshotProvenance, StopSignal, TickConfig, TickContext, TwinHandle,
};
use skytwin_core::recommend::CoreNetworkRegistry;
use skytwin_core::store::{Bucket, Store};
use skytwin_core::view::{export_geojson, SnapshotView};

fn synth_context(params: FleetParams, store: Store) -> TickContext {
    TickContext::new(
        Box::new(SyntheticSource::new(params.build())),
        store.shared(),
        CoreNetworkRegistry::uk_default(),
        TickConfig { seed: params.seed, ..TickConfig::default() },
    )
}

fn five_tick_trace() -> ReplayTrace {
    let fleet = FleetParams { n: 50, seed: 11, ..FleetParams::default() }.build();
    let t0 = fleet.epoch;
    let records = (0..5)
        .map(|i| {
            let t = t0 + 10.0 * i as f64;
            if i == 2 {
                TraceRecord::Fail { t, kind: FailKind::Failed(FailureReason::HttpError(503)) }
            } else {
                TraceRecord::States { t, states: synth_tick(&fleet, t).states().unwrap().to_vec() }
            }
        })
        .collect();
    ReplayTrace::new(records)
}

#[test]
fn replay_loop_counts_fallback_ticks() {
    let mut ctx = TickContext::new(
        Box::new(ReplaySource::new(five_tick_trace())),
        Store::new().shared(),
        CoreNetworkRegistry::uk_default(),
        TickConfig::default(),
    );
    let handle = TwinHandle::new();
    let stats = run_loop(&mut ctx, &handle, &ManualClock::new(0.0), 10.0, &StopSignal::new(), None);
    assert_eq!(stats.ticks, 5);
    let m = handle.metrics();
    assert_eq!((m.ticks, m.fallback_ticks, m.skipped_ticks, m.errors), (5, 1, 0, 0));
    assert_eq!(m.latency.count, 5);
    let latest = handle.latest().unwrap();
    assert_eq!(latest.provenance, SnapshotProvenance::Measured);
    assert_eq!(m.last_tick_time, Some(latest.tick_time));
}

#[test]
fn synthetic_loop_ticks_on_boundaries() {
    let params = FleetParams { n: 30, seed: 2, ..FleetParams::default() };
    let clock = ManualClock::new(params.epoch - 3.0);
    let mut ctx = synth_context(params.clone(), Store::new());
    let handle = TwinHandle::new();
    let stats = run_loop(&mut ctx, &handle, &clock, 10.0, &StopSignal::new(), Some(3));
    assert_eq!(stats.ticks, 3);
    assert_eq!(handle.latest().unwrap().tick_time, params.epoch + 20.0);
}

#[test]
fn published_snapshot_never_goes_back_in_time() {
    let params = FleetParams { n: 20, seed: 4, ..FleetParams::default() };
    let mut ctx = synth_context(params.clone(), Store::new());
    let first = ctx.tick(params.epoch).unwrap();
    let second = ctx.tick(params.epoch + 10.0).unwrap();
    let handle = TwinHandle::new();
    handle.publish(Arc::clone(&second));
    handle.publish(first);
    assert_eq!(handle.latest().unwrap().tick_time, second.tick_time);
    assert_eq!(handle.metrics().ticks, 2);
}

#[test]
fn reopened_store_rebuilds_the_latest_view() {
    let dir = tempfile::tempdir().unwrap();
    let params = FleetParams { n: 40, seed: 8, accel_noise_std: 0.5, ..FleetParams::default() };
    let mut ctx = synth_context(params.clone(), Store::open(dir.path()).unwrap());
    let mut last = None;
    for i in 0..3 {
        last = Some(ctx.tick(params.epoch + 10.0 * i as f64).unwrap());
    }
    drop(ctx);

    let reopened = Store::open(dir.path()).unwrap();
    assert_eq!(reopened.timestamps(Bucket::Dt, "tick").len(), 3);
    let mut live = SnapshotView::from_snapshot(&last.unwrap());
    live.latency = None;
    let rebuilt = SnapshotView::from_store(&reopened, None).unwrap();
    assert_eq!(serde_json::to_value(&rebuilt).unwrap(), serde_json::to_value(&live).unwrap());
}

fn check_geojson(gj: &Value, view: &SnapshotView) -> Result<(), TestCaseError> {
    prop_assert_eq!(&gj["type"], "FeatureCollection");
    let features = gj["features"].as_array().unwrap();
    prop_assert_eq!(features.len(), view.aircraft.len() + view.clusters.len());
    for f in features {
        prop_assert_eq!(&f["type"], "Feature");
        prop_assert!(f["properties"].is_object());
        prop_assert_eq!(&f["geometry"]["type"], "Point");
        let c = f["geometry"]["coordinates"].as_array().unwrap();
        prop_assert_eq!(c.len(), 2);
        let (lon, lat) = (c[0].as_f64().unwrap(), c[1].as_f64().unwrap());
        prop_assert!((-180.0..=180.0).contains(&lon) && (-90.0..=90.0).contains(&lat));
    }
    for (f, a) in features.iter().zip(&view.aircraft) {
        prop_assert_eq!(f["properties"]["icao24"].as_str(), Some(a.icao24.as_str()));
        prop_assert_eq!(f["geometry"]["coordinates"][0].as_f64(), Some(a.lon));
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn geojson_is_well_formed(seed in any::<u64>(), n in 3usize..80, noise in 0.0..2.0f64, ticks in 1usize..3) {
        let params = FleetParams { n, seed, accel_noise_std: noise, jitter_max_s: 5.0, ..FleetParams::default() };
        let mut ctx = synth_context(params.clone(), Store::new());
        let mut snapshot = None;
        for i in 0..ticks {
            snapshot = Some(ctx.tick(params.epoch + 10.0 * i as f64).unwrap());
        }
        let view = SnapshotView::from_snapshot(&snapshot.unwrap());
        prop_assume!(!view.degraded);
        check_geojson(&export_geojson(&view).unwrap(), &view)?;
    }
}
