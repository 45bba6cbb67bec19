use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backoff {
    pub initial_ms: u64,
    pub multiplier: u32,
    /// Off by default so event logs replay identically.
    pub jitter: bool,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff { initial_ms: 250, multiplier: 2, jitter: false }
    }
}

impl Backoff {
    /// Delay before retry number `retry` (1-based), without jitter.
    pub fn delay_ms(&self, retry: u32) -> u64 {
        let mut delay = self.initial_ms;
        for _ in 1..retry.max(1) {
            delay = delay.saturating_mul(self.multiplier as u64);
        }
        delay
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutionPolicy {
    pub retry_limit: u32,
    pub backoff: Backoff,
    pub ack_timeout_ms: u64,
    pub heartbeat_interval_ms: u64,
    pub missed_heartbeats_to_stall: u32,
    pub max_concurrency: u32,
    pub per_agent_concurrency: u32,
}

impl Default for ExecutionPolicy {
    fn default() -> Self {
        ExecutionPolicy {
            retry_limit: 2,
            backoff: Backoff::default(),
            ack_timeout_ms: 2000,
            heartbeat_interval_ms: 5000,
            missed_heartbeats_to_stall: 3,
            max_concurrency: 4,
            per_agent_concurrency: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("max_concurrency must be at least 1")]
    ZeroConcurrency,
    #[error("per_agent_concurrency must be at least 1")]
    ZeroAgentConcurrency,
    #[error("heartbeat_interval_ms must be positive")]
    ZeroHeartbeatInterval,
}

impl ExecutionPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.max_concurrency == 0 {
            return Err(PolicyError::ZeroConcurrency);
        }
        if self.per_agent_concurrency == 0 {
            return Err(PolicyError::ZeroAgentConcurrency);
        }
        if self.heartbeat_interval_ms == 0 {
            return Err(PolicyError::ZeroHeartbeatInterval);
        }
        Ok(())
    }

    pub fn stall_threshold_ms(&self) -> u64 {
        self.heartbeat_interval_ms.saturating_mul(self.missed_heartbeats_to_stall as u64)
    }

    pub fn max_attempts(&self) -> u32 {
        self.retry_limit + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Health {
    Healthy,
    Stalled,
}

/// Stalled iff strictly more than `missed_heartbeats_to_stall` intervals
/// have passed since the last heartbeat.
pub fn health_check(last_heartbeat_ms: u64, now_ms: u64, policy: &ExecutionPolicy) -> Health {
    if now_ms.saturating_sub(last_heartbeat_ms) > policy.stall_threshold_ms() {
        Health::Stalled
    } else {
        Health::Healthy
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn health_boundaries_with_defaults() {
        let p = ExecutionPolicy::default();
        let now = 100_000;
        assert_eq!(health_check(now - 1_000, now, &p), Health::Healthy);
        assert_eq!(health_check(now - 16_000, now, &p), Health::Stalled);
        assert_eq!(health_check(now - 15_000, now, &p), Health::Healthy);
        assert_eq!(health_check(now - 15_001, now, &p), Health::Stalled);
    }

    #[test]
    fn exponential_backoff() {
        let b = Backoff::default();
        assert_eq!([b.delay_ms(1), b.delay_ms(2), b.delay_ms(3)], [250, 500, 1000]);
    }

    #[test]
    fn zero_concurrency_rejected() {
        let p = ExecutionPolicy { max_concurrency: 0, ..Default::default() };
        assert_eq!(p.validate(), Err(PolicyError::ZeroConcurrency));
    }
}
