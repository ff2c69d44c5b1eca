use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

/// Monotonic microsecond clock shared by samplers and the workload supervisor.
pub trait Clock: Send + Sync {
    /// Microseconds since the clock's origin. Successive calls never repeat a value.
    fn now_us(&self) -> u64;

    fn sleep_until_us(&self, deadline_us: u64) {
        loop {
            let now = self.now_us();
            if now >= deadline_us {
                return;
            }
            std::thread::sleep(Duration::from_micros(deadline_us - now));
        }
    }
}

#[derive(Debug)]
pub struct MonotonicClock {
    origin: Instant,
    last: AtomicU64,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
            last: AtomicU64::new(0),
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_us(&self) -> u64 {
        let elapsed = self.origin.elapsed().as_micros() as u64;
        // bump by one microsecond when two reads land in the same tick
        let mut prev = self.last.load(Ordering::Relaxed);
        loop {
            let next = elapsed.max(prev + 1);
            match self
                .last
                .compare_exchange_weak(prev, next, Ordering::Relaxed, Ordering::Relaxed)
            {
                Ok(_) => return next,
                Err(p) => prev = p,
            }
        }
    }
}
