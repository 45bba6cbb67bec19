//! Recording stand-ins for the browser and computer-use agents. They keep
//! the agent contract stable until real automation backends are attached.

use async_trait::async_trait;
use autonoma_core::manifest::CAP_BROWSE;
use autonoma_core::{AgentManifest, ArtifactRef};
use serde::{Deserialize, Serialize};

use crate::agentkit::{Agent, AgentContext, AgentError, AgentOutput, AgentTask};

/// 1×1 transparent PNG.
pub const PLACEHOLDER_PNG: &[u8] = &[
    0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A, 0x00, 0x00, 0x00, 0x0D, 0x49, 0x48, 0x44, 0x52, 0x00, 0x00, 0x00,
    0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x06, 0x00, 0x00, 0x00, 0x1F, 0x15, 0xC4, 0x89, 0x00, 0x00, 0x00, 0x0D, 0x49,
    0x44, 0x41, 0x54, 0x78, 0x9C, 0x63, 0x00, 0x01, 0x00, 0x00, 0x05, 0x00, 0x01, 0x0D, 0x0A, 0x2D, 0xB4, 0x00, 0x00,
    0x00, 0x00, 0x49, 0x45, 0x4E, 0x44, 0xAE, 0x42, 0x60, 0x82,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubResult {
    pub actions: Vec<String>,
    pub acknowledgment: String,
    pub wants_screenshot: bool,
}

fn split_actions(request: &str) -> Vec<String> {
    let mut pieces = vec![request.to_string()];
    for sep in ["\n", ";", ",", " then ", " and "] {
        pieces = pieces.iter().flat_map(|p| p.split(sep).map(str::to_string).collect::<Vec<_>>()).collect();
    }
    pieces.into_iter().map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect()
}

/// Records the requested action sequence. Actions are split on newlines,
/// `;`, `,`, ` then ` and ` and `.
pub fn stub_adapter(request: &str) -> StubResult {
    let actions = split_actions(request);
    let wants_screenshot = actions.iter().any(|a| a.to_lowercase().contains("screenshot"));
    let acknowledgment = format!("recorded {} action(s)", actions.len());
    StubResult { actions, acknowledgment, wants_screenshot }
}

async fn run_stub(kind: &str, task: &AgentTask, ctx: &AgentContext) -> Result<AgentOutput, AgentError> {
    ctx.heartbeat();
    let result = stub_adapter(&task.description);
    let mut artifacts: Vec<ArtifactRef> = Vec::new();
    if let Some(sink) = ctx.artifacts() {
        let log = serde_json::to_vec(&result).map_err(|e| AgentError::failed(e.to_string()))?;
        artifacts.push(sink.write_artifact(&format!("{kind}-actions-{}.json", task.step_id), &log).map_err(AgentError::Failed)?);
        if result.wants_screenshot {
            let name = format!("{kind}-{}-{}.png", task.step_id, task.attempt);
            artifacts.push(sink.write_screenshot(&name, PLACEHOLDER_PNG).map_err(AgentError::Failed)?);
        }
    }
    let mut summary = result.acknowledgment.clone();
    for a in &result.actions {
        summary.push_str("\n- ");
        summary.push_str(a);
    }
    Ok(AgentOutput { summary, artifacts })
}

pub struct BrowserAgent {
    manifest: AgentManifest,
}

impl Default for BrowserAgent {
    fn default() -> Self {
        let mut manifest = AgentManifest::new("browser", &[CAP_BROWSE]);
        manifest.display_name = "Browser".into();
        manifest.heartbeat_capable = true;
        manifest.description = "Records browser actions (navigation, clicks, form input).".into();
        manifest.grants.allow_network = true;
        manifest.grants.network_allowlist = vec!["*.example.org".into(), "example.org".into()];
        BrowserAgent { manifest }
    }
}

impl BrowserAgent {
    pub fn with_manifest(manifest: AgentManifest) -> Self {
        BrowserAgent { manifest }
    }
}

#[async_trait]
impl Agent for BrowserAgent {
    fn manifest(&self) -> &AgentManifest {
        &self.manifest
    }

    async fn run(&self, task: AgentTask, ctx: AgentContext) -> Result<AgentOutput, AgentError> {
        run_stub("browser", &task, &ctx).await
    }
}

pub struct ComputerAgent {
    manifest: AgentManifest,
}

impl Default for ComputerAgent {
    fn default() -> Self {
        let mut manifest = AgentManifest::new("computer", &[super::CAP_COMPUTER]);
        manifest.display_name = "Computer".into();
        manifest.heartbeat_capable = true;
        manifest.description = "Records desktop actions and captures placeholder screenshots.".into();
        ComputerAgent { manifest }
    }
}

#[async_trait]
impl Agent for ComputerAgent {
    fn manifest(&self) -> &AgentManifest {
        &self.manifest
    }

    async fn run(&self, task: AgentTask, ctx: AgentContext) -> Result<AgentOutput, AgentError> {
        run_stub("computer", &task, &ctx).await
    }
}
