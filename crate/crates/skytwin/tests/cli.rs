use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;
use skytwin_core::ingest::{synth_tick, FailKind, FailureReason, FleetParams, ReplayTrace, TraceRecord};

const BIN: &str = env!("CARGO_BIN_EXE_skytwin");

fn skytwin(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("SKYTWIN_LOG", "warn").output().expect("spawn skytwin")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Three ticks, the middle one failed.
fn write_trace(dir: &Path) -> String {
    let fleet = FleetParams { n: 40, seed: 9, ..FleetParams::default() }.build();
    let t0 = fleet.epoch;
    let states = |t: f64| synth_tick(&fleet, t).states().unwrap().to_vec();
    let trace = ReplayTrace::new(vec![
        TraceRecord::States { t: t0, states: states(t0) },
        TraceRecord::Fail { t: t0 + 10.0, kind: FailKind::Failed(FailureReason::Timeout) },
        TraceRecord::States { t: t0 + 20.0, states: states(t0 + 20.0) },
    ]);
    let path = dir.join("trace.ndjson");
    std::fs::write(&path, trace.to_ndjson()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(skytwin(&[]).status.code(), Some(1));
    assert_eq!(skytwin(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        skytwin(&["export", "--bucket", "nowhere", "--format", "lp", "--store-dir", "."]).status.code(),
        Some(1)
    );
    assert_eq!(skytwin(&["--help"]).status.code(), Some(0));
}

#[test]
fn validate_config() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, r#"{"interval_s": 5, "k_min": 2, "k_max": 6, "seed": 1, "t_max_s": 30, "hysteresis": 0.1}"#)
        .unwrap();
    let out = skytwin(&["validate-config", good.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    for (name, body) in [
        ("range.json", r#"{"k_min": 5, "k_max": 3}"#),
        ("unknown.json", r#"{"interval": 5}"#),
        ("syntax.json", "{"),
        ("replay.json", r#"{"source": {"kind": "replay", "path": "/does/not/exist.ndjson"}}"#),
    ] {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        assert_eq!(skytwin(&["validate-config", p.to_str().unwrap()]).status.code(), Some(1), "{name}");
    }
    assert_eq!(skytwin(&["validate-config", "/does/not/exist.json"]).status.code(), Some(1));
}

#[test]
fn tick_prints_snapshot() {
    let out = skytwin(&["tick", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["provenance"], "measured");
    assert_eq!(v["aircraft"].as_array().unwrap().len(), 100);
}

#[test]
fn replay_run_persists_and_exports_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let trace = write_trace(dir.path());
    let source = format!("replay:{trace}");
    let mut exports = Vec::new();
    for run in 0..2 {
        let store = dir.path().join(format!("store{run}"));
        let out = skytwin(&[
            "run",
            "--source",
            &source,
            "--store-dir",
            store.to_str().unwrap(),
            "--listen",
            "127.0.0.1:0",
            "--exit-when-done",
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let lp = skytwin(&["export", "--bucket", "dt", "--format", "lp", "--store-dir", store.to_str().unwrap()]);
        assert_eq!(lp.status.code(), Some(0));
        exports.push(stdout(&lp));
    }
    assert_eq!(exports[0], exports[1]);
    let ticks: Vec<&str> = exports[0].lines().filter(|l| l.starts_with("tick,")).collect();
    assert_eq!(ticks.len(), 3);
    assert!(ticks[1].contains("provenance=projected_fallback"));

    let store = dir.path().join("store0");
    let csv = skytwin(&["export", "--bucket", "physical", "--format", "csv", "--store-dir", store.to_str().unwrap()]);
    let text = stdout(&csv);
    assert!(text.starts_with("timestamp_ns,measurement,icao24"));
    assert_eq!(text.lines().count(), 1 + 80);

    let gj = skytwin(&["export", "--bucket", "dt", "--format", "geojson", "--store-dir", store.to_str().unwrap()]);
    let v: Value = serde_json::from_str(&stdout(&gj)).unwrap();
    assert_eq!(v["type"], "FeatureCollection");
    let coords = &v["features"][0]["geometry"]["coordinates"];
    assert!(coords[0].as_f64().unwrap() < 2.0 && coords[1].as_f64().unwrap() > 49.0, "lon before lat");
}

#[test]
fn missing_store_dir_is_a_config_error() {
    let out = skytwin(&["export", "--bucket", "dt", "--format", "lp", "--store-dir", "/does/not/exist"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_trace_is_a_config_error() {
    let out = skytwin(&["tick", "--source", "replay:/does/not/exist.ndjson"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_csv_headers() {
    let out = skytwin(&["bench", "latency", "--n", "30", "--reps", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,rep,preprocessing_ms,decision_ms,total_ms"));
    assert_eq!(lines.count(), 2);

    let out = skytwin(&["bench", "projection", "--dt", "0,30", "--n", "30", "--trials", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("delta_t_s,accuracy,change_rate_pct,n_common,n_new"));
    assert!(lines.next().unwrap().starts_with("0,1"));
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut buf = String::new();
    s.read_to_string(&mut buf).ok()?;
    Some(buf)
}

#[test]
fn serves_503_until_first_tick() {
    let port = free_port();
    let listen = format!("127.0.0.1:{port}");
    // An hour-long interval: the first tick is far away.
    let mut child = Command::new(BIN)
        .args(["run", "--interval", "3600", "--listen", &listen])
        .env("SKYTWIN_LOG", "warn")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let response = loop {
        if let Some(r) = http_get(port, "/v1/snapshot/latest") {
            break r;
        }
        assert!(Instant::now() < deadline, "server never came up");
        std::thread::sleep(Duration::from_millis(50));
    };
    let metrics = http_get(port, "/v1/metrics").unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 503"), "{response}");
    assert!(response.to_ascii_lowercase().contains("retry-after: 3600"), "{response}");
    assert!(metrics.starts_with("HTTP/1.1 200"));
    assert!(metrics.contains("\"ticks\":0"));
}
