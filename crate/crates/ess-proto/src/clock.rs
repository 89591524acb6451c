//! Clock abstraction: live code runs on the system monotonic clock, tests run
//! on a virtual clock that advances deterministically when every registered
//! worker thread is asleep.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};

/// Monotonic instant measured in nanoseconds since the owning clock's epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_nanos(nanos: u64) -> Timestamp {
        Timestamp(nanos)
    }

    pub fn as_nanos(&self) -> u64 {
        self.0
    }

    pub fn as_millis(&self) -> u64 {
        self.0 / 1_000_000
    }

    pub fn as_secs_f64(&self) -> f64 {
        self.0 as f64 / 1e9
    }

    /// Duration since an earlier timestamp, saturating to zero.
    pub fn since(&self, earlier: Timestamp) -> Duration {
        Duration::from_nanos(self.0.saturating_sub(earlier.0))
    }
}

impl std::ops::Add<Duration> for Timestamp {
    type Output = Timestamp;

    fn add(self, d: Duration) -> Timestamp {
        Timestamp(self.0.saturating_add(d.as_nanos().min(u64::MAX as u128) as u64))
    }
}

/// A monotonic clock services can sleep against. Worker threads that sleep on
/// a virtual clock must bracket their participation with `register_worker` /
/// `deregister_worker` so the clock knows when everyone is parked and time
/// may advance. Both calls are no-ops on the system clock.
pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
    fn sleep(&self, d: Duration);

    fn sleep_until(&self, t: Timestamp) {
        let now = self.now();
        if t > now {
            self.sleep(t.since(now));
        }
    }

    fn register_worker(&self) {}
    fn deregister_worker(&self) {}
}

/// Wall-clock implementation backed by `Instant`.
pub struct SystemClock {
    epoch: Instant,
}

impl SystemClock {
    pub fn new() -> SystemClock {
        SystemClock {
            epoch: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.epoch.elapsed().as_nanos().min(u64::MAX as u128) as u64)
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// RAII guard pairing `register_worker` with `deregister_worker`.
pub struct WorkerGuard<'a> {
    clock: &'a dyn Clock,
}

impl<'a> WorkerGuard<'a> {
    pub fn new(clock: &'a dyn Clock) -> WorkerGuard<'a> {
        clock.register_worker();
        WorkerGuard { clock }
    }
}

impl Drop for WorkerGuard<'_> {
    fn drop(&mut self) {
        self.clock.deregister_worker();
    }
}

thread_local! {
    /// Whether the current thread is registered as a virtual-clock worker.
    static REGISTERED_WORKER: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

struct VirtualState {
    now: u64,
    /// Registered threads that are currently runnable (not parked in sleep).
    runnable: usize,
    /// (wake_at, token) for every parked sleeper.
    sleepers: BinaryHeap<Reverse<(u64, u64)>>,
    next_token: u64,
}

impl VirtualState {
    /// Called whenever `runnable` hits zero: jump to the earliest wake time.
    fn advance(&mut self) {
        if let Some(Reverse((wake_at, _))) = self.sleepers.peek() {
            if *wake_at > self.now {
                self.now = *wake_at;
            }
        }
    }
}

/// Deterministic clock for tests. Time only moves when every registered
/// worker is parked in `sleep`, at which point it jumps to the earliest
/// requested wake-up. A thread that blocks on anything other than the clock
/// (joins, channels) must not be registered while doing so, or time stalls.
pub struct VirtualClock {
    state: Mutex<VirtualState>,
    cv: Condvar,
}

impl VirtualClock {
    pub fn new() -> Arc<VirtualClock> {
        Arc::new(VirtualClock {
            state: Mutex::new(VirtualState {
                now: 0,
                runnable: 0,
                sleepers: BinaryHeap::new(),
                next_token: 0,
            }),
            cv: Condvar::new(),
        })
    }

    /// Move time forward directly. Only meaningful from a driver thread that
    /// is not itself registered.
    pub fn advance(&self, d: Duration) {
        let mut state = self.state.lock();
        state.now = state.now.saturating_add(d.as_nanos().min(u64::MAX as u128) as u64);
        self.cv.notify_all();
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.state.lock().now)
    }

    fn sleep(&self, d: Duration) {
        let mut state = self.state.lock();
        let wake_at = state
            .now
            .saturating_add(d.as_nanos().min(u64::MAX as u128) as u64);
        if wake_at <= state.now {
            return;
        }
        let token = state.next_token;
        state.next_token += 1;
        state.sleepers.push(Reverse((wake_at, token)));
        let registered = REGISTERED_WORKER.with(|r| r.get());
        if registered {
            state.runnable -= 1;
            if state.runnable == 0 {
                state.advance();
                self.cv.notify_all();
            }
        }
        while state.now < wake_at {
            self.cv.wait(&mut state);
        }
        // Drop our sleeper entry; it is necessarily among the expired ones.
        let mut keep = BinaryHeap::with_capacity(state.sleepers.len());
        for Reverse((w, t)) in state.sleepers.drain() {
            if t != token {
                keep.push(Reverse((w, t)));
            }
        }
        state.sleepers = keep;
        if registered {
            state.runnable += 1;
        }
    }

    fn register_worker(&self) {
        let already = REGISTERED_WORKER.with(|r| r.replace(true));
        assert!(!already, "thread registered twice with a virtual clock");
        self.state.lock().runnable += 1;
    }

    fn deregister_worker(&self) {
        let was = REGISTERED_WORKER.with(|r| r.replace(false));
        if !was {
            return;
        }
        let mut state = self.state.lock();
        state.runnable = state.runnable.saturating_sub(1);
        if state.runnable == 0 && !state.sleepers.is_empty() {
            state.advance();
            self.cv.notify_all();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU64, Ordering};
    use std::sync::Barrier;

    #[test]
    fn system_clock_monotonic() {
        let clock = SystemClock::new();
        let a = clock.now();
        let b = clock.now();
        assert!(b >= a);
    }

    #[test]
    fn virtual_clock_single_thread_advances_through_sleep() {
        let clock = VirtualClock::new();
        clock.register_worker();
        assert_eq!(clock.now(), Timestamp::ZERO);
        clock.sleep(Duration::from_secs(5));
        assert_eq!(clock.now().as_nanos(), 5_000_000_000);
        clock.sleep_until(Timestamp::from_nanos(7_000_000_000));
        assert_eq!(clock.now().as_nanos(), 7_000_000_000);
        // Sleeping until the past returns immediately.
        clock.sleep_until(Timestamp::from_nanos(1));
        assert_eq!(clock.now().as_nanos(), 7_000_000_000);
        clock.deregister_worker();
    }

    #[test]
    fn virtual_clock_overlapping_sleeps_share_time() {
        // Four workers each sleep 100ms twice; with overlap the total virtual
        // makespan is 200ms, not 800ms.
        let clock = VirtualClock::new();
        let max_seen = AtomicU64::new(0);
        let barrier = Barrier::new(4);
        std::thread::scope(|s| {
            for _ in 0..4 {
                s.spawn(|| {
                    clock.register_worker();
                    barrier.wait();
                    clock.sleep(Duration::from_millis(100));
                    clock.sleep(Duration::from_millis(100));
                    max_seen.fetch_max(clock.now().as_nanos(), Ordering::SeqCst);
                    clock.deregister_worker();
                });
            }
        });
        assert_eq!(max_seen.load(Ordering::SeqCst), 200_000_000);
    }

    #[test]
    fn virtual_clock_staggered_wakeups_in_order() {
        let clock = VirtualClock::new();
        let log = Mutex::new(Vec::new());
        let barrier = Barrier::new(3);
        std::thread::scope(|s| {
            for delay_ms in [30u64, 10, 20] {
                let (clock, log, barrier) = (&clock, &log, &barrier);
                s.spawn(move || {
                    clock.register_worker();
                    barrier.wait();
                    clock.sleep(Duration::from_millis(delay_ms));
                    log.lock().push((clock.now().as_millis(), delay_ms));
                    clock.deregister_worker();
                });
            }
        });
        let entries = log.into_inner();
        assert_eq!(entries.len(), 3);
        // Each thread woke exactly at its requested time.
        for (woke_ms, delay_ms) in entries {
            assert_eq!(woke_ms, delay_ms);
        }
    }
}
