//! Token-bucket rate limiter shared by all workers of a run.

use std::sync::Mutex;
use std::time::{Duration, Instant};

pub struct RateLimiter {
    state: Mutex<BucketState>,
    tokens_per_sec: f64,
}

struct BucketState {
    tokens: f64,
    last_refill: Instant,
}

impl RateLimiter {
    /// `requests_per_minute` must be positive.
    pub fn new(requests_per_minute: f64) -> Self {
        assert!(requests_per_minute > 0.0);
        RateLimiter {
            state: Mutex::new(BucketState { tokens: 1.0, last_refill: Instant::now() }),
            tokens_per_sec: requests_per_minute / 60.0,
        }
    }

    /// Block until a request token is available.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().unwrap();
                let now = Instant::now();
                let elapsed = now.duration_since(state.last_refill).as_secs_f64();
                state.tokens = (state.tokens + elapsed * self.tokens_per_sec).min(1.0);
                state.last_refill = now;
                if state.tokens >= 1.0 {
                    state.tokens -= 1.0;
                    return;
                }
                (1.0 - state.tokens) / self.tokens_per_sec
            };
            std::thread::sleep(Duration::from_secs_f64(wait.min(0.25)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paces_requests() {
        // 60,000 rpm = 1 per millisecond; three acquires should take ~2ms.
        let limiter = RateLimiter::new(60_000.0);
        let start = Instant::now();
        limiter.acquire();
        limiter.acquire();
        limiter.acquire();
        let elapsed = start.elapsed();
        assert!(elapsed >= Duration::from_millis(1), "no pacing applied: {elapsed:?}");
    }
}
