//! Clocks, a sliding-window request limiter and an in-flight gate.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

const WINDOW: Duration = Duration::from_secs(60);

/// Time source used for rate limiting and retry backoff.
pub trait Clock: Send + Sync {
    /// Time elapsed since an arbitrary fixed origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Simulated clock: `sleep` advances time instantly.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: Mutex<Duration>,
    slept: Mutex<Vec<Duration>>,
}

impl ManualClock {
    pub fn advance(&self, d: Duration) {
        *self.now.lock().expect("clock lock") += d;
    }

    /// Every duration passed to `sleep`, in call order.
    pub fn sleeps(&self) -> Vec<Duration> {
        self.slept.lock().expect("clock lock").clone()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.now.lock().expect("clock lock")
    }

    fn sleep(&self, d: Duration) {
        self.slept.lock().expect("clock lock").push(d);
        self.advance(d);
    }
}

/// Admits at most `per_minute` request starts in any 60 s window.
#[derive(Debug)]
pub struct RateLimiter {
    per_minute: usize,
    starts: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn new(per_minute: u32) -> Self {
        Self {
            per_minute: per_minute.max(1) as usize,
            starts: Mutex::new(VecDeque::new()),
        }
    }

    /// Blocks until a start is admitted and returns the recorded start time.
    pub fn acquire(&self, clock: &dyn Clock) -> Duration {
        loop {
            let wait = {
                let mut starts = self.starts.lock().expect("limiter lock");
                let now = clock.now();
                while let Some(&oldest) = starts.front() {
                    if oldest + WINDOW <= now {
                        starts.pop_front();
                    } else {
                        break;
                    }
                }
                if starts.len() < self.per_minute {
                    starts.push_back(now);
                    return now;
                }
                (starts[0] + WINDOW).saturating_sub(now)
            };
            clock.sleep(wait.max(Duration::from_millis(1)));
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct ConcurrencyGate {
    limit: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    gate: &'a ConcurrencyGate,
}

impl ConcurrencyGate {
    pub fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            in_use: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut in_use = self.in_use.lock().expect("gate lock");
        while *in_use >= self.limit {
            in_use = self.freed.wait(in_use).expect("gate lock");
        }
        *in_use += 1;
        Permit { gate: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.gate.in_use.lock().expect("gate lock") -= 1;
        self.gate.freed.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Largest number of starts falling in any half-open 60 s window.
    fn max_in_window(mut starts: Vec<Duration>) -> usize {
        starts.sort();
        let mut best = 0;
        for (i, &s) in starts.iter().enumerate() {
            let n = starts[i..].iter().take_while(|&&t| t < s + WINDOW).count();
            best = best.max(n);
        }
        best
    }

    proptest! {
        #[test]
        fn window_never_exceeded(rpm in 1u32..12, n in 1usize..60, gaps in prop::collection::vec(0u64..20_000, 60)) {
            let clock = ManualClock::default();
            let limiter = RateLimiter::new(rpm);
            let mut starts = Vec::new();
            for gap in gaps.iter().take(n) {
                clock.advance(Duration::from_millis(*gap));
                starts.push(limiter.acquire(&clock));
            }
            prop_assert!(max_in_window(starts) <= rpm as usize);
        }
    }

    #[test]
    fn window_holds_across_threads() {
        let clock = Arc::new(ManualClock::default());
        let limiter = Arc::new(RateLimiter::new(5));
        let starts = Mutex::new(Vec::new());
        std::thread::scope(|s| {
            for _ in 0..6 {
                s.spawn(|| {
                    for _ in 0..5 {
                        let t = limiter.acquire(clock.as_ref());
                        starts.lock().unwrap().push(t);
                    }
                });
            }
        });
        let starts = starts.into_inner().unwrap();
        assert_eq!(starts.len(), 30);
        assert!(max_in_window(starts) <= 5);
    }

    #[test]
    fn burst_then_wait() {
        let clock = ManualClock::default();
        let limiter = RateLimiter::new(3);
        for _ in 0..3 {
            assert_eq!(limiter.acquire(&clock), Duration::ZERO);
        }
        assert_eq!(limiter.acquire(&clock), WINDOW);
    }

    #[test]
    fn gate_bounds_in_flight() {
        let gate = ConcurrencyGate::new(3);
        let current = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..12 {
                s.spawn(|| {
                    let _p = gate.acquire();
                    let now = current.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    current.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 3);
        assert!(peak.load(Ordering::SeqCst) >= 1);
    }
}
