use std::path::PathBuf;
use std::sync::Arc;

use async_trait::async_trait;
use autonoma_core::{AgentManifest, ArtifactRef, FailureCause, Lang, PrivilegeGrants, StepId};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{mpsc, watch};

use super::approval::ApprovalToken;
use super::invoke::{PauseBudget, Signal};
use crate::clock::RuntimeClock;

/// Output of an upstream step, handed to dependents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepInput {
    pub step_id: StepId,
    pub summary: String,
    pub artifacts: Vec<ArtifactRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTask {
    pub conversation_id: String,
    pub step_id: StepId,
    pub description: String,
    pub attempt: u32,
    pub lang: Lang,
    #[serde(default)]
    pub inputs: Vec<StepInput>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentOutput {
    pub summary: String,
    #[serde(default)]
    pub artifacts: Vec<ArtifactRef>,
}

impl AgentOutput {
    pub fn text(summary: impl Into<String>) -> Self {
        AgentOutput { summary: summary.into(), artifacts: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("{0}")]
    Failed(String),
    #[error("privilege violation: {0}")]
    PrivilegeViolation(String),
    #[error("approval denied")]
    ApprovalDenied,
    #[error("cancelled")]
    Cancelled,
    #[error("timed out")]
    Timeout,
}

impl AgentError {
    pub fn failed(msg: impl Into<String>) -> Self {
        AgentError::Failed(msg.into())
    }

    pub fn into_cause(self) -> FailureCause {
        match self {
            AgentError::Failed(message) => FailureCause::AgentError { message },
            AgentError::PrivilegeViolation(detail) => FailureCause::PrivilegeViolation { detail },
            AgentError::ApprovalDenied => FailureCause::ApprovalDenied,
            AgentError::Cancelled => FailureCause::Cancelled,
            AgentError::Timeout => FailureCause::Timeout,
        }
    }
}

/// A worker agent. Implementations run one task per call; the supervisor
/// enforces per-agent concurrency.
#[async_trait]
pub trait Agent: Send + Sync {
    fn manifest(&self) -> &AgentManifest;

    /// Acknowledges receipt of a dispatch. The supervisor waits for this
    /// at most `ack_timeout` before counting the attempt as failed.
    async fn acknowledge(&self, _task: &AgentTask) -> Result<(), AgentError> {
        Ok(())
    }

    async fn run(&self, task: AgentTask, ctx: AgentContext) -> Result<AgentOutput, AgentError>;
}

/// Human-in-the-loop gate for destructive actions.
#[async_trait]
pub trait ApprovalGate: Send + Sync {
    /// Blocks until a decision is recorded. Approval yields a single-use
    /// token bound to `action_digest`.
    async fn request(&self, step_id: &StepId, description: &str, action_digest: &str) -> Result<ApprovalToken, AgentError>;
}

/// Where agents put files they produce.
pub trait ArtifactSink: Send + Sync {
    fn write_artifact(&self, name: &str, bytes: &[u8]) -> Result<ArtifactRef, String>;
    fn write_screenshot(&self, name: &str, bytes: &[u8]) -> Result<ArtifactRef, String>;
    /// Host directory of `artifacts/`, when artifacts live on disk.
    fn artifact_dir(&self) -> Option<PathBuf>;
}

/// Artifact sink backed by a conversation directory.
#[derive(Debug, Clone)]
pub struct ArtifactDir {
    store: crate::store::Store,
    conversation_id: String,
}

impl ArtifactDir {
    pub fn new(store: crate::store::Store, conversation_id: impl Into<String>) -> Self {
        ArtifactDir { store, conversation_id: conversation_id.into() }
    }

    fn write(&self, dir: PathBuf, prefix: &str, name: &str, bytes: &[u8]) -> Result<ArtifactRef, String> {
        let ok = !name.is_empty()
            && name != "."
            && name != ".."
            && name.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'));
        if !ok {
            return Err(format!("invalid artifact name `{name}`"));
        }
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        self.store.write_atomic(&dir.join(name), bytes).map_err(|e| e.to_string())?;
        Ok(ArtifactRef(format!("{prefix}/{name}")))
    }
}

impl ArtifactSink for ArtifactDir {
    fn write_artifact(&self, name: &str, bytes: &[u8]) -> Result<ArtifactRef, String> {
        let paths = self.store.paths(&self.conversation_id).map_err(|e| e.to_string())?;
        self.write(paths.artifacts, crate::store::ARTIFACTS_DIR, name, bytes)
    }

    fn write_screenshot(&self, name: &str, bytes: &[u8]) -> Result<ArtifactRef, String> {
        let paths = self.store.paths(&self.conversation_id).map_err(|e| e.to_string())?;
        self.write(paths.screenshots, crate::store::SCREENSHOTS_DIR, name, bytes)
    }

    fn artifact_dir(&self) -> Option<PathBuf> {
        self.store.paths(&self.conversation_id).ok().map(|p| p.artifacts)
    }
}

/// Everything an agent may touch during one invocation. Grants always
/// come from the agent's own manifest.
#[derive(Clone)]
pub struct AgentContext {
    grants: PrivilegeGrants,
    pub(super) signals: mpsc::UnboundedSender<Signal>,
    pub(super) cancel: watch::Receiver<bool>,
    pub(super) approvals: Option<Arc<dyn ApprovalGate>>,
    pub(super) artifacts: Option<Arc<dyn ArtifactSink>>,
    pub(super) pause: Arc<PauseBudget>,
    pub clock: RuntimeClock,
}

impl AgentContext {
    pub(super) fn new(
        grants: PrivilegeGrants,
        signals: mpsc::UnboundedSender<Signal>,
        cancel: watch::Receiver<bool>,
        approvals: Option<Arc<dyn ApprovalGate>>,
        artifacts: Option<Arc<dyn ArtifactSink>>,
        pause: Arc<PauseBudget>,
        clock: RuntimeClock,
    ) -> Self {
        AgentContext { grants, signals, cancel, approvals, artifacts, pause, clock }
    }

    pub fn grants(&self) -> &PrivilegeGrants {
        &self.grants
    }

    pub fn heartbeat(&self) {
        let _ = self.signals.send(Signal::Heartbeat);
    }

    pub fn is_cancelled(&self) -> bool {
        *self.cancel.borrow()
    }

    /// Resolves once the supervisor asks this invocation to stop.
    pub async fn cancelled(&self) {
        let mut rx = self.cancel.clone();
        while !*rx.borrow_and_update() {
            if rx.changed().await.is_err() {
                std::future::pending::<()>().await;
            }
        }
    }

    /// Asks a human to approve a destructive action. The wait does not
    /// count against the runtime budget.
    pub async fn request_approval(
        &self,
        step_id: &StepId,
        description: &str,
        action_digest: &str,
    ) -> Result<ApprovalToken, AgentError> {
        let gate = self.approvals.as_ref().ok_or(AgentError::ApprovalDenied)?;
        let _paused = self.pause.begin(&self.clock);
        gate.request(step_id, description, action_digest).await
    }

    pub fn artifacts(&self) -> Option<&Arc<dyn ArtifactSink>> {
        self.artifacts.as_ref()
    }

    /// Network access check against the grants' allowlist.
    pub fn check_network(&self, host: &str) -> Result<(), AgentError> {
        if !self.grants.allow_network {
            return Err(AgentError::PrivilegeViolation("network access not granted".into()));
        }
        if !self.grants.permits_host(host) {
            return Err(AgentError::PrivilegeViolation(format!("host `{host}` not in network allowlist")));
        }
        Ok(())
    }

    pub fn check_exec(&self) -> Result<(), AgentError> {
        if self.grants.allow_exec {
            Ok(())
        } else {
            Err(AgentError::PrivilegeViolation("exec not granted".into()))
        }
    }
}
