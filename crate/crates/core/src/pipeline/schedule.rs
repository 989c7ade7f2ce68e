//! Wall-clock aligned tick scheduling with skip-on-overrun.

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use super::{TickContext, TwinHandle};
use crate::EpochSeconds;

/// Cooperative stop flag shared between the ticker and its owner.
#[derive(Debug, Clone, Default)]
pub struct StopSignal {
    inner: Arc<(Mutex<bool>, Condvar)>,
}

impl StopSignal {
    pub fn new() -> Self {
        StopSignal::default()
    }

    pub fn stop(&self) {
        let (flag, cv) = &*self.inner;
        *flag.lock().expect("stop flag poisoned") = true;
        cv.notify_all();
    }

    pub fn is_stopped(&self) -> bool {
        *self.inner.0.lock().expect("stop flag poisoned")
    }

    /// Sleeps up to `timeout`; returns `true` if stopped meanwhile.
    pub fn wait(&self, timeout: Duration) -> bool {
        let (flag, cv) = &*self.inner;
        let guard = flag.lock().expect("stop flag poisoned");
        let (guard, _) = cv.wait_timeout_while(guard, timeout, |stopped| !*stopped).expect("stop flag poisoned");
        *guard
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> EpochSeconds;

    /// Blocks until `t` or until `stop` fires; returns `false` when stopped.
    fn sleep_until(&self, t: EpochSeconds, stop: &StopSignal) -> bool;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> EpochSeconds {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
    }

    fn sleep_until(&self, t: EpochSeconds, stop: &StopSignal) -> bool {
        loop {
            if stop.is_stopped() {
                return false;
            }
            let remaining = t - self.now();
            if remaining <= 0.0 {
                return true;
            }
            if stop.wait(Duration::from_secs_f64(remaining)) {
                return false;
            }
        }
    }
}

/// Test clock: time only moves when advanced, sleeping jumps forward.
#[derive(Debug, Clone, Default)]
pub struct ManualClock {
    now: Arc<Mutex<EpochSeconds>>,
}

impl ManualClock {
    pub fn new(start: EpochSeconds) -> Self {
        ManualClock { now: Arc::new(Mutex::new(start)) }
    }

    pub fn advance(&self, dt: f64) {
        *self.now.lock().expect("clock poisoned") += dt;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> EpochSeconds {
        *self.now.lock().expect("clock poisoned")
    }

    fn sleep_until(&self, t: EpochSeconds, stop: &StopSignal) -> bool {
        if stop.is_stopped() {
            return false;
        }
        let mut now = self.now.lock().expect("clock poisoned");
        *now = now.max(t);
        true
    }
}

/// The first boundary `previous + m·interval` (m ≥ 1) not earlier than
/// `now`, and how many boundaries were passed over to reach it.
pub fn next_boundary(previous: EpochSeconds, interval: f64, now: EpochSeconds) -> (EpochSeconds, u64) {
    let mut next = previous + interval;
    let mut skipped = 0;
    if next < now {
        let behind = ((now - next) / interval).ceil();
        skipped = behind as u64;
        next += behind * interval;
        // Guard against rounding leaving us a hair short.
        while next < now {
            next += interval;
            skipped += 1;
        }
    }
    (next, skipped)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoopStats {
    pub ticks: u64,
    pub skipped: u64,
}

/// Calls `tick` at every interval boundary (multiples of `interval` since
/// the Unix epoch) until `stop` fires or `max_ticks` is reached. A tick that
/// overruns its slot skips the boundaries it missed instead of queueing
/// them; `on_skip` reports each skip count.
pub fn run_schedule(
    clock: &dyn Clock,
    interval: f64,
    stop: &StopSignal,
    max_ticks: Option<u64>,
    mut tick: impl FnMut(EpochSeconds),
    mut on_skip: impl FnMut(u64),
) -> LoopStats {
    let mut stats = LoopStats::default();
    let mut at = (clock.now() / interval).ceil() * interval;
    loop {
        if max_ticks.is_some_and(|m| stats.ticks >= m) || !clock.sleep_until(at, stop) {
            return stats;
        }
        tick(at);
        stats.ticks += 1;
        let (next, skipped) = next_boundary(at, interval, clock.now());
        if skipped > 0 {
            tracing::warn!(tick = at, skipped, "tick overran its interval");
            stats.skipped += skipped;
            on_skip(skipped);
        }
        at = next;
    }
}

/// Drives `ctx` and publishes every snapshot to `handle`.
///
/// Sources with their own timeline (replay) are fast-forwarded record by
/// record and the loop ends when they run out; other sources tick on the
/// wall clock every `interval` seconds. Tick errors are logged and counted,
/// never fatal.
pub fn run_loop(
    ctx: &mut TickContext,
    handle: &TwinHandle,
    clock: &dyn Clock,
    interval: f64,
    stop: &StopSignal,
    max_ticks: Option<u64>,
) -> LoopStats {
    let one = |ctx: &mut TickContext, at: EpochSeconds| match ctx.tick(at) {
        Ok(snapshot) => handle.publish(snapshot),
        Err(e) => {
            tracing::error!(error = %e, "tick failed");
            handle.record_error(e.to_string());
        }
    };
    if ctx.source.next_tick_hint().is_some() {
        let mut stats = LoopStats::default();
        while let Some(at) = ctx.source.next_tick_hint() {
            if stop.is_stopped() || max_ticks.is_some_and(|m| stats.ticks >= m) {
                break;
            }
            one(ctx, at);
            stats.ticks += 1;
        }
        return stats;
    }
    run_schedule(clock, interval, stop, max_ticks, |at| one(ctx, at), |n| handle.record_skipped(n))
}
