use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::BackendError;

/// Exponential backoff: the delay before retry `k` (0-based) is
/// `backoff_base_ms * 2^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff_base_ms: u64,
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        Duration::from_millis(self.backoff_base_ms.saturating_mul(1u64 << retry.min(32)))
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Virtual clock: records requested delays without sleeping.
#[derive(Debug, Default)]
pub struct RecordingSleeper {
    slept: Mutex<Vec<Duration>>,
}

impl RecordingSleeper {
    pub fn delays(&self) -> Vec<Duration> {
        self.slept.lock().unwrap().clone()
    }
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.slept.lock().unwrap().push(d);
    }
}

/// Runs `op` until it succeeds, fails permanently, or the retry budget is
/// spent. `op` receives the 0-based attempt number.
pub fn with_retry<T>(
    policy: RetryPolicy,
    sleeper: &dyn Sleeper,
    mut op: impl FnMut(u32) -> Result<T, BackendError>,
) -> Result<T, BackendError> {
    let mut attempt = 0;
    loop {
        match op(attempt) {
            Ok(v) => return Ok(v),
            Err(e) if e.is_transient() && attempt < policy.max_retries => {
                log::debug!("attempt {} failed ({e}); retrying", attempt + 1);
                sleeper.sleep(policy.delay(attempt));
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn succeeds_on_third_attempt() {
        let clock = RecordingSleeper::default();
        let policy = RetryPolicy { max_retries: 3, backoff_base_ms: 100 };
        let mut calls = 0;
        let r = with_retry(policy, &clock, |_| {
            calls += 1;
            if calls < 3 {
                Err(BackendError::Status { status: 500, message: "boom".into() })
            } else {
                Ok("ok")
            }
        });
        assert_eq!(r.unwrap(), "ok");
        assert_eq!(calls, 3);
        assert_eq!(clock.delays(), vec![Duration::from_millis(100), Duration::from_millis(200)]);
    }

    #[test]
    fn permanent_errors_are_not_retried() {
        let clock = RecordingSleeper::default();
        let policy = RetryPolicy { max_retries: 5, backoff_base_ms: 1 };
        let mut calls = 0;
        let r: Result<(), _> = with_retry(policy, &clock, |_| {
            calls += 1;
            Err(BackendError::AuthFailure("401".into()))
        });
        assert!(matches!(r, Err(BackendError::AuthFailure(_))));
        assert_eq!(calls, 1);
        assert!(clock.delays().is_empty());
    }

    proptest! {
        #[test]
        fn retry_count_bounded_and_backoff_exponential(max in 0u32..8, base in 0u64..1000, fail_for in 0u32..12) {
            let clock = RecordingSleeper::default();
            let policy = RetryPolicy { max_retries: max, backoff_base_ms: base };
            let mut calls = 0u32;
            let r = with_retry(policy, &clock, |_| {
                calls += 1;
                if calls <= fail_for { Err(BackendError::Timeout) } else { Ok(()) }
            });
            prop_assert!(calls <= max + 1);
            prop_assert_eq!(r.is_ok(), fail_for <= max);
            let delays = clock.delays();
            prop_assert_eq!(delays.len() as u32, calls - 1);
            for (k, d) in delays.iter().enumerate() {
                prop_assert_eq!(*d, Duration::from_millis(base << k));
            }
        }
    }
}
