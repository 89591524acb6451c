//! Token-bucket bandwidth throttling for block payload bytes. Emulates the
//! VM egress cap at desk scale: a 1 MiB read against a 1 MiB/s bucket takes
//! about one second.

use std::sync::Arc;
use std::time::Duration;

use ess_proto::clock::{Clock, Timestamp};
use parking_lot::Mutex;

/// Bytes consumed from the bucket per acquisition step. Small enough that a
/// terminate can interrupt a throttled transfer quickly.
const CHUNK: u64 = 64 * 1024;

struct BucketState {
    /// May go negative: a chunk is taken eagerly and the debt slept off.
    tokens: f64,
    last_refill: Timestamp,
}

/// A token bucket refilled continuously at `rate` bytes per second, with a
/// small burst allowance so short transfers are not over-delayed.
pub struct TokenBucket {
    rate: f64,
    burst: f64,
    state: Mutex<BucketState>,
    clock: Arc<dyn Clock>,
}

impl TokenBucket {
    pub fn new(rate_bytes_per_sec: u64, clock: Arc<dyn Clock>) -> TokenBucket {
        assert!(rate_bytes_per_sec > 0, "throttle rate must be positive");
        let rate = rate_bytes_per_sec as f64;
        let burst = (rate / 20.0).max(CHUNK as f64);
        let now = clock.now();
        TokenBucket {
            rate,
            burst,
            state: Mutex::new(BucketState {
                tokens: burst,
                last_refill: now,
            }),
            clock,
        }
    }

    /// Blocks until `n` bytes of budget have been consumed, or until
    /// `keep_going` returns false between chunks. Returns false if aborted.
    pub fn acquire(&self, n: u64, keep_going: &dyn Fn() -> bool) -> bool {
        let mut remaining = n;
        while remaining > 0 {
            if !keep_going() {
                return false;
            }
            let take = remaining.min(CHUNK);
            let wait = {
                let mut st = self.state.lock();
                let now = self.clock.now();
                let elapsed = now.since(st.last_refill).as_secs_f64();
                st.tokens = (st.tokens + elapsed * self.rate).min(self.burst);
                st.last_refill = now;
                st.tokens -= take as f64;
                if st.tokens < 0.0 {
                    Duration::from_secs_f64(-st.tokens / self.rate)
                } else {
                    Duration::ZERO
                }
            };
            // Sleep in slices so termination can interrupt a long wait.
            let mut pending = wait;
            while !pending.is_zero() {
                if !keep_going() {
                    return false;
                }
                let slice = pending.min(Duration::from_millis(100));
                self.clock.sleep(slice);
                pending -= slice;
            }
            remaining -= take;
        }
        true
    }
}

/// Optional throttle: `None` means unlimited.
pub struct Throttle(Option<TokenBucket>);

impl Throttle {
    pub fn new(rate_bytes_per_sec: Option<u64>, clock: Arc<dyn Clock>) -> Throttle {
        Throttle(rate_bytes_per_sec.map(|rate| TokenBucket::new(rate, clock)))
    }

    pub fn acquire(&self, n: u64, keep_going: &dyn Fn() -> bool) -> bool {
        match &self.0 {
            Some(bucket) => bucket.acquire(n, keep_going),
            None => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ess_proto::clock::SystemClock;

    #[test]
    fn one_mib_at_one_mib_per_sec_takes_about_a_second() {
        const MIB: u64 = 1024 * 1024;
        let clock: Arc<dyn Clock> = Arc::new(SystemClock::new());
        let bucket = TokenBucket::new(MIB, clock.clone());
        let start = clock.now();
        assert!(bucket.acquire(MIB, &|| true));
        let elapsed = clock.now().since(start).as_secs_f64();
        assert!(
            (0.9..=1.1).contains(&elapsed),
            "1 MiB at 1 MiB/s took {elapsed:.3}s"
        );
    }

    #[test]
    fn sustained_rate_within_ten_percent() {
        // 10s window at 256 KiB/s: budget for the stated accuracy bound.
        const RATE: u64 = 256 * 1024;
        let clock: Arc<dyn Clock> = Arc::new(SystemClock::new());
        let bucket = TokenBucket::new(RATE, clock.clone());
        let start = clock.now();
        let mut moved = 0u64;
        while clock.now().since(start) < Duration::from_secs(10) {
            assert!(bucket.acquire(CHUNK, &|| true));
            moved += CHUNK;
        }
        let elapsed = clock.now().since(start).as_secs_f64();
        let rate = moved as f64 / elapsed;
        let err = (rate - RATE as f64).abs() / RATE as f64;
        assert!(err < 0.10, "sustained rate {rate:.0} B/s, err {err:.3}");
    }

    #[test]
    fn abort_interrupts_acquisition() {
        let clock: Arc<dyn Clock> = Arc::new(SystemClock::new());
        let bucket = TokenBucket::new(1024, clock); // 1 KiB/s: glacial
        let done = std::sync::atomic::AtomicU32::new(0);
        let ok = bucket.acquire(10 * 1024 * 1024, &|| {
            done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) < 3
        });
        assert!(!ok);
    }

    #[test]
    fn unlimited_throttle_is_free() {
        let clock: Arc<dyn Clock> = Arc::new(SystemClock::new());
        let throttle = Throttle::new(None, clock.clone());
        let start = clock.now();
        assert!(throttle.acquire(u64::MAX / 2, &|| true));
        assert!(clock.now().since(start) < Duration::from_millis(100));
    }
}
