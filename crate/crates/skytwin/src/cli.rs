use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::thread;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use skytwin_core::exec::ExecMode;
use skytwin_core::ingest::{FleetParams, SyntheticSource};
use skytwin_core::metrics::{
    bench_latency, bench_projection, write_latency_csv, write_projection_csv, ProjectionBenchConfig,
};
use skytwin_core::pipeline::{
    run_loop, Clock, PipelineConfig, SourceConfig, StopSignal, SystemClock, TickContext, TwinHandle,
};
use skytwin_core::store::{Bucket, Store};
use skytwin_core::view::{export_csv, export_geojson, SnapshotView};
use skytwin_core::{seconds_to_nanos, EpochSeconds};

/// Exit status: success.
pub const EXIT_OK: i32 = 0;
/// Exit status: bad usage or configuration.
pub const EXIT_CONFIG: i32 = 1;
/// Exit status: failure while running.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "skytwin", version, about = "Digital twin pipeline for aeronautical ad-hoc network core selection")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the tick loop and serve the HTTP API.
    Run(RunArgs),
    /// Run a single tick and print the snapshot as JSON.
    Tick(TickArgs),
    /// Benchmarks; CSV goes to stdout.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Dump a persisted bucket.
    Export(ExportArgs),
    /// Check a config file.
    ValidateConfig { path: PathBuf },
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Config file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Source: synth, synth:<fleet.json>, replay:<trace.ndjson>, live or live:<url>.
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Core network registry (JSON array).
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Directory for the bucket logs.
    #[arg(long)]
    store_dir: Option<PathBuf>,
    /// Run sequentially instead of data-parallel.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Seconds between ticks.
    #[arg(long)]
    interval: Option<f64>,
    /// Stop after this many ticks.
    #[arg(long)]
    max_ticks: Option<u64>,
    /// Exit once the tick loop ends instead of serving until interrupted.
    #[arg(long)]
    exit_when_done: bool,
}

#[derive(Debug, Args)]
struct TickArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Tick time in epoch seconds. Defaults to the fleet epoch (synth), the
    /// first record (replay) or now (live).
    #[arg(long)]
    at: Option<EpochSeconds>,
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Tick latency per fleet size.
    Latency {
        #[arg(long, value_delimiter = ',', default_value = "100,500,1000")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        sequential: bool,
    },
    /// Clustering accuracy of projected versus actual positions per Δt.
    Projection {
        #[arg(long, value_delimiter = ',', default_value = "0,10,20,40,60")]
        dt: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Standard deviation of the per-aircraft acceleration, m/s².
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long, default_value_t = 32)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        sequential: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExportFormat {
    Lp,
    Csv,
    Geojson,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// physical or dt.
    #[arg(long)]
    bucket: Bucket,
    #[arg(long, value_enum)]
    format: ExportFormat,
    /// Directory holding the bucket logs.
    #[arg(long)]
    store_dir: PathBuf,
    /// GeoJSON only: latest tick at or before this epoch time.
    #[arg(long)]
    at: Option<EpochSeconds>,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome = Result<(), Failure>;

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn runtime_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Tick(a) => cmd_tick(a),
        Command::Bench(b) => cmd_bench(b),
        Command::Export(a) => cmd_export(a),
        Command::ValidateConfig { path } => cmd_validate(path),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Config(e)) => {
            eprintln!("skytwin: config error: {e:#}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(e)) if is_broken_pipe(&e) => EXIT_OK,
        Err(Failure::Runtime(e)) => {
            eprintln!("skytwin: {e:#}");
            EXIT_RUNTIME
        }
    }
}

/// A closed stdout (`skytwin export ... | head`) is not a failure.
fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe))
}

fn print_json(value: &impl serde::Serialize) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime_err)?;
    text.push('\n');
    std::io::stdout().lock().write_all(text.as_bytes()).map_err(runtime_err)
}

fn exec_mode(sequential: bool) -> ExecMode {
    if sequential {
        ExecMode::Sequential
    } else {
        ExecMode::default()
    }
}

fn load_config(a: &PipelineArgs) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => PipelineConfig::load(path).map_err(config_err)?,
        None => PipelineConfig::default(),
    };
    if let Some(spec) = &a.source {
        cfg.source = SourceConfig::from_spec(spec).map_err(config_err)?;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(path) = &a.registry {
        cfg.registry_path = Some(path.clone());
    }
    if let Some(dir) = &a.store_dir {
        cfg.store_dir = Some(dir.clone());
    }
    if a.sequential {
        cfg.exec = ExecMode::Sequential;
    }
    Ok(cfg)
}

/// Opens the pipeline. Synthetic fleets are re-anchored at `synth_epoch`
/// when given. Returns the context and the synthetic epoch, if any.
fn open_context(
    cfg: &PipelineConfig,
    synth_epoch: Option<EpochSeconds>,
) -> Result<(TickContext, Option<EpochSeconds>), Failure> {
    cfg.validate().map_err(config_err)?;
    let fleet = cfg.source.synth_fleet(cfg.seed).map_err(config_err)?;
    let (ctx, epoch) = match fleet {
        Some(mut fleet) => {
            if let Some(e) = synth_epoch {
                fleet.epoch = e;
            }
            let epoch = fleet.epoch;
            (TickContext::with_source(cfg, Box::new(SyntheticSource::new(fleet))), Some(epoch))
        }
        None => (TickContext::from_config(cfg), None),
    };
    Ok((ctx.map_err(config_err)?, epoch))
}

fn cmd_tick(a: TickArgs) -> Outcome {
    let cfg = load_config(&a.pipeline)?;
    let (mut ctx, epoch) = open_context(&cfg, None)?;
    let at = a.at.or(epoch).or_else(|| ctx.source.next_tick_hint()).unwrap_or_else(|| SystemClock.now());
    let snapshot = ctx.tick(at).map_err(runtime_err)?;
    let view = SnapshotView::from_snapshot(&snapshot);
    print_json(&view)
}

fn cmd_run(a: RunArgs) -> Outcome {
    let mut cfg = load_config(&a.pipeline)?;
    if let Some(interval) = a.interval {
        cfg.interval_s = interval;
    }
    // A generated fleet takes off at the first wall-clock boundary.
    let first_boundary = (SystemClock.now() / cfg.interval_s).ceil() * cfg.interval_s;
    let (mut ctx, _) = open_context(&cfg, Some(first_boundary))?;
    tracing::info!(source = %ctx.source.describe(), listen = %a.listen, "starting pipeline");

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(runtime_err)?;
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind(a.listen))
        .with_context(|| format!("binding {}", a.listen))
        .map_err(runtime_err)?;

    let handle = TwinHandle::new();
    let stop = StopSignal::new();
    let ticker = {
        let (handle, stop) = (handle.clone(), stop.clone());
        let interval = cfg.interval_s;
        let max_ticks = a.max_ticks;
        thread::Builder::new()
            .name("skytwin-ticker".into())
            .spawn(move || run_loop(&mut ctx, &handle, &SystemClock, interval, &stop, max_ticks))
            .map_err(runtime_err)?
    };

    let (done_tx, done_rx) = tokio::sync::oneshot::channel::<()>();
    let exit_when_done = a.exit_when_done;
    let shutdown = async move {
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = done_rx, if exit_when_done => {}
        }
    };
    let retry_after = cfg.interval_s.ceil() as u64;
    let server = runtime.spawn(crate::server::serve(listener, handle.clone(), retry_after, shutdown));

    let watcher = {
        let stop = stop.clone();
        thread::spawn(move || {
            let stats = ticker.join();
            let _ = done_tx.send(());
            (stats, stop)
        })
    };
    let served = runtime.block_on(server);
    stop.stop();
    let (stats, _) = watcher.join().map_err(|_| runtime_err(anyhow::anyhow!("ticker thread panicked")))?;
    let stats = stats.map_err(|_| runtime_err(anyhow::anyhow!("ticker thread panicked")))?;
    tracing::info!(ticks = stats.ticks, skipped = stats.skipped, "pipeline stopped");
    served.map_err(runtime_err)?.map_err(runtime_err)
}

fn cmd_bench(b: BenchCommand) -> Outcome {
    let stdout = std::io::stdout().lock();
    match b {
        BenchCommand::Latency { n, reps, seed, sequential } => {
            if n.is_empty() || n.contains(&0) || reps == 0 {
                return Err(config_err(anyhow::anyhow!("--n needs positive sizes and --reps must be positive")));
            }
            let bench = bench_latency(&n, reps, seed, exec_mode(sequential));
            for s in &bench.stats {
                eprintln!(
                    "n={} median_total_ms={:.2} p95_total_ms={:.2} median_pre_ms={:.2} median_dec_ms={:.2}",
                    s.n, s.total_ms_median, s.total_ms_p95, s.preprocessing_ms_median, s.decision_ms_median
                );
            }
            write_latency_csv(&bench.samples, stdout).map_err(runtime_err)
        }
        BenchCommand::Projection { dt, n, noise, trials, seed, sequential } => {
            let negative = |x: f64| x.is_nan() || x < 0.0;
            if dt.iter().copied().any(negative) || n < 3 || trials == 0 || negative(noise) {
                return Err(config_err(anyhow::anyhow!(
                    "--dt must be non-negative, --n at least 3, --trials positive and --noise non-negative"
                )));
            }
            let cfg = ProjectionBenchConfig {
                fleet: FleetParams { n, accel_noise_std: noise, ..FleetParams::default() },
                trials,
                seed,
                exec: exec_mode(sequential),
                ..ProjectionBenchConfig::default()
            };
            write_projection_csv(&bench_projection(&dt, &cfg), stdout).map_err(runtime_err)
        }
    }
}

fn cmd_export(a: ExportArgs) -> Outcome {
    if !a.store_dir.is_dir() {
        return Err(config_err(anyhow::anyhow!("store directory {} does not exist", a.store_dir.display())));
    }
    let store = Store::open(&a.store_dir).map_err(runtime_err)?;
    let mut out = std::io::stdout().lock();
    match a.format {
        ExportFormat::Lp => out.write_all(store.export_lines(a.bucket).as_bytes()).map_err(runtime_err),
        ExportFormat::Csv => export_csv(&store, a.bucket, out).map_err(runtime_err),
        ExportFormat::Geojson => {
            if a.bucket != Bucket::Dt {
                return Err(config_err(anyhow::anyhow!("geojson export needs --bucket dt")));
            }
            let view = SnapshotView::from_store(&store, a.at.map(seconds_to_nanos))
                .ok_or_else(|| runtime_err(anyhow::anyhow!("no tick stored in the DT bucket")))?;
            let gj = export_geojson(&view).map_err(runtime_err)?;
            print_json(&gj)
        }
    }
}

fn cmd_validate(path: PathBuf) -> Outcome {
    let cfg = PipelineConfig::load(&path).map_err(config_err)?;
    cfg.registry().map_err(config_err)?;
    if let SourceConfig::Replay { path } | SourceConfig::Synth { fleet: Some(path), .. } = &cfg.source {
        if !path.exists() {
            return Err(config_err(anyhow::anyhow!("source file {} does not exist", path.display())));
        }
    }
    println!("{}: ok", path.display());
    Ok(())
}
