use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Sliding-window limiter: at most `budget` acquisitions in any window of
/// length `window`. Shared across workers.
#[derive(Debug)]
pub struct RateLimiter {
    budget: usize,
    window: Duration,
    granted: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(budget: u32) -> Self {
        Self::new(budget as usize, Duration::from_secs(60))
    }

    pub fn new(budget: usize, window: Duration) -> Self {
        assert!(budget > 0, "rate budget must be positive");
        RateLimiter {
            budget,
            window,
            granted: Mutex::new(VecDeque::with_capacity(budget)),
        }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn window(&self) -> Duration {
        self.window
    }

    /// Block until a request may be issued; returns the grant time.
    pub fn acquire(&self) -> Instant {
        loop {
            let wait = {
                let mut granted = self.granted.lock().expect("limiter poisoned");
                let now = Instant::now();
                while granted.front().is_some_and(|&t| now.duration_since(t) >= self.window) {
                    granted.pop_front();
                }
                if granted.len() < self.budget {
                    granted.push_back(now);
                    return now;
                }
                let oldest = *granted.front().expect("non-empty at budget");
                self.window.saturating_sub(now.duration_since(oldest))
            };
            std::thread::sleep(wait.max(Duration::from_micros(50)));
        }
    }
}
