//! Out-of-process agents. The plugin executable reads one `task` message on
//! standard input and answers with newline-delimited JSON on standard
//! output:
//!
//! ```text
//! -> {"type":"task","payload":{...AgentTask...}}
//! <- {"type":"heartbeat","payload":null}
//! <- {"type":"result","payload":{"summary":"...","artifacts":[]}}
//! <- {"type":"error","payload":{"message":"..."}}
//! ```
//!
//! The manifest is a JSON file next to the executable, named
//! `<executable>.manifest.json` (or `manifest.json` in the same directory).

use std::path::{Path, PathBuf};
use std::process::Stdio;

use async_trait::async_trait;
use autonoma_core::AgentManifest;
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::process::Command;

use super::agent::{Agent, AgentContext, AgentError, AgentOutput, AgentTask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum PluginMessage {
    Task(AgentTask),
    Heartbeat(#[serde(default)] serde_json::Value),
    Result(AgentOutput),
    Error(PluginError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PluginError {
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SubprocessAgent {
    manifest: AgentManifest,
    program: PathBuf,
    args: Vec<String>,
}

impl SubprocessAgent {
    pub fn new(manifest: AgentManifest, program: impl Into<PathBuf>, args: Vec<String>) -> Self {
        SubprocessAgent { manifest, program: program.into(), args }
    }

    /// Loads the manifest that sits next to `program`.
    pub fn load(program: impl AsRef<Path>, args: Vec<String>) -> std::io::Result<Self> {
        let program = program.as_ref();
        let mut candidates = vec![PathBuf::from(format!("{}.manifest.json", program.display()))];
        if let Some(dir) = program.parent() {
            candidates.push(dir.join("manifest.json"));
        }
        let path = candidates.into_iter().find(|p| p.is_file()).ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("no manifest next to {}", program.display()))
        })?;
        let manifest: AgentManifest = serde_json::from_slice(&std::fs::read(&path)?)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(SubprocessAgent::new(manifest, program, args))
    }
}

#[async_trait]
impl Agent for SubprocessAgent {
    fn manifest(&self) -> &AgentManifest {
        &self.manifest
    }

    async fn run(&self, task: AgentTask, ctx: AgentContext) -> Result<AgentOutput, AgentError> {
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .kill_on_drop(true)
            .env_clear();
        if let Ok(path) = std::env::var("PATH") {
            cmd.env("PATH", path);
        }
        if let Some(root) = &ctx.grants().fs_jail_root {
            cmd.current_dir(root);
        }
        let mut child = cmd.spawn().map_err(|e| AgentError::failed(format!("plugin spawn failed: {e}")))?;

        let mut line = serde_json::to_vec(&PluginMessage::Task(task)).expect("task serializes");
        line.push(b'\n');
        let mut stdin = child.stdin.take().expect("piped stdin");
        stdin.write_all(&line).await.map_err(|e| AgentError::failed(format!("plugin stdin: {e}")))?;
        drop(stdin);

        let stdout = child.stdout.take().expect("piped stdout");
        let mut lines = BufReader::new(stdout).lines();
        let outcome = loop {
            let next = tokio::select! {
                biased;
                _ = ctx.cancelled() => break Err(AgentError::Cancelled),
                next = lines.next_line() => next,
            };
            let raw = match next {
                Ok(Some(raw)) => raw,
                Ok(None) => break Err(AgentError::failed("plugin exited without a result")),
                Err(e) => break Err(AgentError::failed(format!("plugin stdout: {e}"))),
            };
            if raw.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<PluginMessage>(&raw) {
                Ok(PluginMessage::Heartbeat(_)) => ctx.heartbeat(),
                Ok(PluginMessage::Result(out)) => break Ok(out),
                Ok(PluginMessage::Error(e)) => break Err(AgentError::Failed(e.message)),
                Ok(PluginMessage::Task(_)) => break Err(AgentError::failed("plugin sent a task message")),
                Err(e) => break Err(AgentError::failed(format!("malformed plugin message: {e}"))),
            }
        };
        let _ = child.start_kill();
        let _ = child.wait().await;
        outcome
    }
}
