//! Token-bucket rate limiter shared by HTTP provider backends.

use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Thread-safe token bucket. Defaults to 10 requests/s with a burst of 10.
pub struct TokenBucket {
    rate_per_s: f64,
    burst: f64,
    state: Mutex<BucketState>,
}

struct BucketState {
    tokens: f64,
    last_refill: Instant,
}

impl TokenBucket {
    pub fn new(rate_per_s: f64, burst: f64) -> Self {
        TokenBucket {
            rate_per_s,
            burst,
            state: Mutex::new(BucketState {
                tokens: burst,
                last_refill: Instant::now(),
            }),
        }
    }

    /// Blocks until a token is available, then consumes it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut st = self.state.lock().unwrap();
                let now = Instant::now();
                Self::refill(&mut st, now, self.rate_per_s, self.burst);
                if st.tokens >= 1.0 {
                    st.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - st.tokens) / self.rate_per_s)
            };
            std::thread::sleep(wait);
        }
    }

    fn refill(st: &mut BucketState, now: Instant, rate: f64, burst: f64) {
        let elapsed = now.duration_since(st.last_refill).as_secs_f64();
        st.tokens = (st.tokens + elapsed * rate).min(burst);
        st.last_refill = now;
    }
}

impl Default for TokenBucket {
    fn default() -> Self {
        TokenBucket::new(10.0, 10.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burst_then_refill() {
        let start = Instant::now();
        let mut st = BucketState {
            tokens: 2.0,
            last_refill: start,
        };
        TokenBucket::refill(&mut st, start, 10.0, 2.0);
        assert_eq!(st.tokens, 2.0);
        // After 500 ms at 10/s the bucket would gain 5 tokens but caps at burst.
        TokenBucket::refill(&mut st, start + Duration::from_millis(500), 10.0, 2.0);
        assert_eq!(st.tokens, 2.0);
        st.tokens = 0.0;
        TokenBucket::refill(&mut st, start + Duration::from_millis(700), 10.0, 2.0);
        assert!((st.tokens - 2.0).abs() < 1e-9);
    }

    #[test]
    fn acquire_consumes_tokens() {
        let bucket = TokenBucket::new(1000.0, 2.0);
        bucket.acquire();
        bucket.acquire();
        let st = bucket.state.lock().unwrap();
        assert!(st.tokens < 1.0);
    }
}
