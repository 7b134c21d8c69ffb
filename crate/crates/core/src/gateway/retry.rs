use std::fmt;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::secs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    #[serde(rename = "base_delay_s", with = "secs")]
    pub base_delay: Duration,
    pub backoff_factor: f64,
    #[serde(default)]
    pub jitter_fraction: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            backoff_factor: 2.0,
            jitter_fraction: 0.1,
        }
    }
}

impl RetryPolicy {
    /// A single attempt, no waiting.
    pub fn none() -> Self {
        Self {
            max_attempts: 1,
            base_delay: Duration::ZERO,
            backoff_factor: 1.0,
            jitter_fraction: 0.0,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.max_attempts < 1 {
            return Err("max_attempts must be at least 1".into());
        }
        if !(self.backoff_factor >= 1.0) || !self.backoff_factor.is_finite() {
            return Err(format!("backoff_factor {} must be >= 1", self.backoff_factor));
        }
        if !(0.0..=1.0).contains(&self.jitter_fraction) {
            return Err(format!("jitter_fraction {} must be in [0, 1]", self.jitter_fraction));
        }
        Ok(())
    }

    /// Nominal wait after the `n`th failed attempt (1-based), before jitter.
    pub fn delay(&self, n: u32) -> Duration {
        let exp = i32::try_from(n.saturating_sub(1)).unwrap_or(i32::MAX);
        // whole nanoseconds keep integral factors exact; saturates instead of panicking
        let nanos = self.base_delay.as_nanos() as f64 * self.backoff_factor.powi(exp);
        Duration::from_nanos(nanos.round().min(u64::MAX as f64) as u64)
    }

    /// Nominal waits between consecutive attempts: `max_attempts - 1` entries.
    pub fn schedule(&self) -> Vec<Duration> {
        (1..self.max_attempts).map(|n| self.delay(n)).collect()
    }

    fn jittered(&self, n: u32, rng: &mut impl Rng) -> Duration {
        let nominal = self.delay(n);
        if self.jitter_fraction == 0.0 {
            return nominal;
        }
        let j = rng.gen_range(-self.jitter_fraction..=self.jitter_fraction);
        nominal.mul_f64(1.0 + j)
    }
}

/// Failure of a single backend call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallError {
    Timeout,
    Connect(String),
    Status { code: u16, body: String },
    Other(String),
}

impl CallError {
    /// Timeouts, connection failures, 5xx, 408 and 429 are worth another try.
    pub fn is_retryable(&self) -> bool {
        match self {
            CallError::Timeout | CallError::Connect(_) => true,
            CallError::Status { code, .. } => *code >= 500 || *code == 408 || *code == 429,
            CallError::Other(_) => false,
        }
    }
}

impl fmt::Display for CallError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CallError::Timeout => f.write_str("request timed out"),
            CallError::Connect(e) => write!(f, "connection failed: {e}"),
            CallError::Status { code, body } if body.is_empty() => write!(f, "HTTP {code}"),
            CallError::Status { code, body } => write!(f, "HTTP {code}: {body}"),
            CallError::Other(e) => f.write_str(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RetryError {
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: CallError },
    #[error("rejected: {0}")]
    Rejected(CallError),
}

/// Runs `call` (given the 1-based attempt number) until it succeeds, fails
/// with a non-retryable error, or `policy.max_attempts` is used up. `sleep`
/// receives each backoff wait. Returns the value and the attempts used.
pub fn with_retry<T>(
    policy: &RetryPolicy,
    mut sleep: impl FnMut(Duration),
    mut call: impl FnMut(u32) -> Result<T, CallError>,
) -> Result<(T, u32), RetryError> {
    let max = policy.max_attempts.max(1);
    let mut rng = rand::thread_rng();
    let mut attempt = 1;
    loop {
        match call(attempt) {
            Ok(v) => return Ok((v, attempt)),
            Err(e) if !e.is_retryable() => return Err(RetryError::Rejected(e)),
            Err(e) if attempt >= max => return Err(RetryError::Exhausted { attempts: attempt, last: e }),
            Err(e) => {
                tracing::debug!(attempt, error = %e, "retrying backend call");
                sleep(policy.jittered(attempt, &mut rng));
                attempt += 1;
            }
        }
    }
}
