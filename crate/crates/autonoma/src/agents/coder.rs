//! Script execution inside the jail.

use std::process::Stdio;
use std::time::Duration;

use async_trait::async_trait;
use autonoma_core::manifest::CAP_EXEC;
use autonoma_core::{AgentManifest, PrivilegeGrants};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::io::{AsyncRead, AsyncReadExt};
use tokio::process::Command;

use crate::agentkit::{Agent, AgentContext, AgentError, AgentOutput, AgentTask, Jail};
use crate::clock::RuntimeClock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptLang {
    Python,
    Shell,
}

impl ScriptLang {
    fn interpreter(self) -> (&'static str, &'static str) {
        match self {
            ScriptLang::Python => ("python3", "py"),
            ScriptLang::Shell => ("sh", "sh"),
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        match tag.trim().to_ascii_lowercase().as_str() {
            "python" | "py" | "python3" => Some(ScriptLang::Python),
            "sh" | "shell" | "bash" => Some(ScriptLang::Shell),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecResult {
    pub stdout: String,
    pub stderr: String,
    pub exit_code: Option<i32>,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("exec not granted")]
    ExecDenied,
    #[error("script exceeded its runtime budget")]
    Timeout,
    #[error("no jail configured for exec")]
    NoJail,
    #[error("failed to start interpreter: {0}")]
    Spawn(String),
}

async fn read_capped<R: AsyncRead + Unpin>(mut r: R, cap: usize) -> Vec<u8> {
    let mut kept = Vec::new();
    let mut buf = [0u8; 8192];
    loop {
        match r.read(&mut buf).await {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                let room = cap.saturating_sub(kept.len());
                kept.extend_from_slice(&buf[..n.min(room)]);
            }
        }
    }
    kept
}

/// Runs `source` with its working directory at the jail root. Wall time is
/// bounded by `max_runtime_ms` and each stream is capped at
/// `max_output_bytes`.
pub async fn run_script(source: &str, lang: ScriptLang, grants: &PrivilegeGrants, clock: &RuntimeClock) -> Result<ExecResult, ExecError> {
    if !grants.allow_exec {
        return Err(ExecError::ExecDenied);
    }
    let root = grants.fs_jail_root.as_ref().ok_or(ExecError::NoJail)?;
    let jail = Jail::new(root).map_err(|e| ExecError::Spawn(e.to_string()))?;
    let (interpreter, ext) = lang.interpreter();
    let work = jail.root().join(".autonoma-scripts");
    std::fs::create_dir_all(&work).map_err(|e| ExecError::Spawn(e.to_string()))?;
    let script = work.join(format!("{}.{ext}", uuid::Uuid::new_v4().simple()));
    std::fs::write(&script, source).map_err(|e| ExecError::Spawn(e.to_string()))?;

    let mut cmd = Command::new(interpreter);
    cmd.arg(&script)
        .current_dir(jail.root())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .kill_on_drop(true)
        .env_clear()
        .env("HOME", jail.root())
        .env("TMPDIR", &work);
    if let Ok(path) = std::env::var("PATH") {
        cmd.env("PATH", path);
    }
    let started = clock.now_ms();
    let mut child = cmd.spawn().map_err(|e| ExecError::Spawn(e.to_string()))?;
    let cap = grants.max_output_bytes as usize;
    let out = tokio::spawn(read_capped(child.stdout.take().expect("piped stdout"), cap));
    let err = tokio::spawn(read_capped(child.stderr.take().expect("piped stderr"), cap));

    let status = tokio::time::timeout(Duration::from_millis(grants.max_runtime_ms), child.wait()).await;
    let result = match status {
        Err(_) => {
            let _ = child.kill().await;
            out.abort();
            err.abort();
            Err(ExecError::Timeout)
        }
        Ok(Err(e)) => Err(ExecError::Spawn(e.to_string())),
        Ok(Ok(status)) => {
            let stdout = out.await.unwrap_or_default();
            let stderr = err.await.unwrap_or_default();
            Ok(ExecResult {
                stdout: String::from_utf8_lossy(&stdout).into_owned(),
                stderr: String::from_utf8_lossy(&stderr).into_owned(),
                exit_code: status.code(),
                duration_ms: clock.now_ms().saturating_sub(started),
            })
        }
    };
    let _ = std::fs::remove_file(&script);
    result
}

/// Pulls a script out of a task description: a fenced block tagged with
/// its language, or a `python:` / `sh:` prefix.
pub fn extract_script(description: &str) -> Option<(ScriptLang, String)> {
    if let Some(start) = description.find("```") {
        let rest = &description[start + 3..];
        let (tag, body) = rest.split_once('\n')?;
        let end = body.find("```")?;
        let lang = ScriptLang::from_tag(tag).unwrap_or(ScriptLang::Shell);
        return Some((lang, body[..end].to_string()));
    }
    let (tag, body) = description.split_once(':')?;
    ScriptLang::from_tag(tag).map(|lang| (lang, body.trim_start().to_string()))
}

pub struct CoderAgent {
    manifest: AgentManifest,
}

impl CoderAgent {
    pub fn new(jail_root: impl Into<String>) -> Self {
        let mut manifest = AgentManifest::new("coder", &[CAP_EXEC]);
        manifest.display_name = "Coder".into();
        manifest.heartbeat_capable = true;
        manifest.description = "Writes and runs scripts in a sandboxed working directory.".into();
        manifest.grants.allow_exec = true;
        manifest.grants.fs_jail_root = Some(jail_root.into());
        CoderAgent { manifest }
    }

    pub fn with_manifest(manifest: AgentManifest) -> Self {
        CoderAgent { manifest }
    }
}

#[async_trait]
impl Agent for CoderAgent {
    fn manifest(&self) -> &AgentManifest {
        &self.manifest
    }

    async fn run(&self, task: AgentTask, ctx: AgentContext) -> Result<AgentOutput, AgentError> {
        ctx.check_exec()?;
        let (lang, source) =
            extract_script(&task.description).ok_or_else(|| AgentError::failed("no script in task description"))?;
        ctx.heartbeat();
        let result = run_script(&source, lang, ctx.grants(), &ctx.clock).await.map_err(|e| match e {
            ExecError::ExecDenied => AgentError::PrivilegeViolation(e.to_string()),
            ExecError::Timeout => AgentError::Timeout,
            other => AgentError::Failed(other.to_string()),
        })?;
        match result.exit_code {
            Some(0) => Ok(AgentOutput::text(result.stdout)),
            code => {
                let tail: String = result.stderr.chars().rev().take(500).collect::<Vec<_>>().into_iter().rev().collect();
                Err(AgentError::Failed(format!("script exited with {code:?}: {tail}")))
            }
        }
    }
}
