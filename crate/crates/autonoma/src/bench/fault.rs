//! Fault injection for synthetic agents.

use std::time::Duration;

use async_trait::async_trait;
use autonoma_core::canonical::digest_of;
use autonoma_core::AgentManifest;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::workload::SYNTHETIC_CAP;
use crate::agentkit::{Agent, AgentContext, AgentError, AgentOutput, AgentTask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Latency {
    Fixed { ms: u64 },
    /// Inclusive range.
    Uniform { lo: u64, hi: u64 },
}

impl Default for Latency {
    fn default() -> Self {
        Latency::Fixed { ms: 100 }
    }
}

impl std::str::FromStr for Latency {
    type Err = String;

    /// `100` or `50..200`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("invalid latency `{s}`"));
        match s.split_once("..") {
            Some((lo, hi)) => Ok(Latency::Uniform { lo: num(lo)?, hi: num(hi)? }),
            None => Ok(Latency::Fixed { ms: num(s)? }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FaultError {
    #[error("{name} must be within [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error("latency range {lo}..{hi} is empty")]
    EmptyRange { lo: u64, hi: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultModel {
    /// Chance that an attempt which does not stall fails.
    pub fail_prob: f64,
    /// Chance that an attempt stops heartbeating and never returns.
    pub stall_prob: f64,
    pub latency: Latency,
    pub seed: u64,
}

/// What one attempt does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Injected {
    Succeed { latency_ms: u64 },
    Fail { latency_ms: u64 },
    Stall,
}

impl FaultModel {
    pub fn new(fail_prob: f64, stall_prob: f64, latency: Latency, seed: u64) -> Result<Self, FaultError> {
        let m = FaultModel { fail_prob, stall_prob, latency, seed };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), FaultError> {
        for (name, value) in [("fail_prob", self.fail_prob), ("stall_prob", self.stall_prob)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(FaultError::Probability { name, value });
            }
        }
        if let Latency::Uniform { lo, hi } = self.latency {
            if lo > hi {
                return Err(FaultError::EmptyRange { lo, hi });
            }
        }
        Ok(())
    }

    /// Per-attempt failure probability: a stall or, failing that, a fault.
    pub fn attempt_failure_prob(&self) -> f64 {
        self.stall_prob + (1.0 - self.stall_prob) * self.fail_prob
    }

    /// Outcome of attempt `attempt` of the step keyed `key`. Independent of
    /// scheduling order, so equal seeds inject equal faults.
    pub fn draw(&self, key: &str, attempt: u32) -> Injected {
        let digest = digest_of(&(self.seed, key, attempt)).expect("key serializes");
        let seed = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stall: f64 = rng.random();
        let fail: f64 = rng.random();
        let latency_ms = match self.latency {
            Latency::Fixed { ms } => ms,
            Latency::Uniform { lo, hi } => rng.random_range(lo..=hi),
        };
        if stall < self.stall_prob {
            Injected::Stall
        } else if fail < self.fail_prob {
            Injected::Fail { latency_ms }
        } else {
            Injected::Succeed { latency_ms }
        }
    }
}

/// Worker whose attempts follow a [`FaultModel`], keyed by the step
/// description.
pub struct FaultAgent {
    manifest: AgentManifest,
    model: FaultModel,
    heartbeat_ms: u64,
}

impl FaultAgent {
    pub fn new(id: &str, model: FaultModel, heartbeat_ms: u64) -> Self {
        let mut manifest = AgentManifest::new(id, &[SYNTHETIC_CAP]);
        manifest.display_name = "Synthetic worker".into();
        manifest.heartbeat_capable = true;
        manifest.description = "Sleeps, fails or stalls as its fault model dictates.".into();
        FaultAgent { manifest, model, heartbeat_ms: heartbeat_ms.max(1) }
    }

    async fn work(&self, ms: u64, ctx: &AgentContext) {
        let mut left = ms;
        while left > 0 {
            let step = left.min(self.heartbeat_ms);
            tokio::time::sleep(Duration::from_millis(step)).await;
            ctx.heartbeat();
            left -= step;
        }
    }
}

#[async_trait]
impl Agent for FaultAgent {
    fn manifest(&self) -> &AgentManifest {
        &self.manifest
    }

    async fn run(&self, task: AgentTask, ctx: AgentContext) -> Result<AgentOutput, AgentError> {
        match self.model.draw(&task.description, task.attempt) {
            Injected::Succeed { latency_ms } => {
                self.work(latency_ms, &ctx).await;
                Ok(AgentOutput::text(format!("{} ok", task.description)))
            }
            Injected::Fail { latency_ms } => {
                self.work(latency_ms, &ctx).await;
                Err(AgentError::failed("injected failure"))
            }
            Injected::Stall => {
                ctx.cancelled().await;
                Err(AgentError::Cancelled)
            }
        }
    }
}
