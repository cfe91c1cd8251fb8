use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::{Backend, BackendError, Query};

/// Exponential backoff with jitter, applied to timeouts, 429s and 5xx.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Total attempts including the first one.
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    /// Upper bound of the uniform jitter, as a fraction of the computed delay.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay_ms: 1_000,
            max_delay_ms: 30_000,
            jitter: 0.25,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, given that `attempt` (1-based) failed.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let exp = attempt.saturating_sub(1).min(20);
        let base = self.base_delay_ms.saturating_mul(1u64 << exp).min(self.max_delay_ms);
        let jitter = if self.jitter > 0.0 && base > 0 {
            rand::rng().random_range(0.0..self.jitter) * base as f64
        } else {
            0.0
        };
        Duration::from_millis(base) + Duration::from_secs_f64(jitter / 1000.0)
    }
}

/// Runs `query` until it succeeds, fails permanently or attempts run out.
/// Both arms carry the number of attempts made.
pub async fn call_with_retry(
    backend: &dyn Backend,
    query: &Query,
    policy: &RetryPolicy,
) -> Result<(String, u32), (BackendError, u32)> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match backend.complete(query).await {
            Ok(body) => return Ok((body, attempt)),
            Err(err) if err.is_retryable() && attempt < policy.max_attempts.max(1) => {
                let delay = policy.backoff(attempt);
                debug!(attempt, delay_ms = delay.as_millis() as u64, error = %err, "retrying");
                tokio::time::sleep(delay).await;
            }
            Err(err) => {
                if err.is_retryable() {
                    warn!(attempt, error = %err, "retries exhausted");
                }
                return Err((err, attempt));
            }
        }
    }
}
