use async_trait::async_trait;
use autonoma_core::AgentManifest;

use crate::agentkit::{Agent, AgentContext, AgentError, AgentOutput, AgentTask};

/// Returns its task description as the summary.
#[derive(Debug, Clone)]
pub struct EchoAgent {
    manifest: AgentManifest,
}

impl EchoAgent {
    pub fn new(id: &str, capabilities: &[&str]) -> Self {
        let mut manifest = AgentManifest::new(id, capabilities);
        manifest.display_name = "Echo".into();
        manifest.heartbeat_capable = true;
        manifest.description = "Echoes the task description.".into();
        EchoAgent { manifest }
    }
}

impl Default for EchoAgent {
    fn default() -> Self {
        EchoAgent::new("echo", &[super::CAP_ECHO])
    }
}

#[async_trait]
impl Agent for EchoAgent {
    fn manifest(&self) -> &AgentManifest {
        &self.manifest
    }

    async fn run(&self, task: AgentTask, ctx: AgentContext) -> Result<AgentOutput, AgentError> {
        ctx.heartbeat();
        Ok(AgentOutput::text(task.description))
    }
}
