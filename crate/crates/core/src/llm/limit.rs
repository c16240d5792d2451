use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimiterConfig {
    pub max_concurrent: usize,
    /// Minimum spacing between request starts; zero disables it.
    pub min_interval: Duration,
}

impl Default for LimiterConfig {
    fn default() -> Self {
        Self {
            max_concurrent: 8,
            min_interval: Duration::ZERO,
        }
    }
}

struct State {
    in_flight: usize,
    next_start: Option<Instant>,
}

/// Per-provider concurrency cap plus a simple start-rate budget.
pub struct Limiter {
    config: LimiterConfig,
    state: Mutex<State>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Limiter {
    pub fn new(config: LimiterConfig) -> Self {
        assert!(config.max_concurrent > 0, "max_concurrent must be positive");
        Self {
            config,
            state: Mutex::new(State {
                in_flight: 0,
                next_start: None,
            }),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let wait_until = {
            let mut st = self.state.lock();
            while st.in_flight >= self.config.max_concurrent {
                self.freed.wait(&mut st);
            }
            st.in_flight += 1;
            let now = Instant::now();
            let start = st.next_start.map_or(now, |t| t.max(now));
            st.next_start = Some(start + self.config.min_interval);
            start
        };
        let now = Instant::now();
        if wait_until > now {
            std::thread::sleep(wait_until - now);
        }
        Permit { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().in_flight
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.limiter.state.lock();
        st.in_flight -= 1;
        self.limiter.freed.notify_one();
    }
}
