//! Chat-completion abstraction. Every model call in the runtime goes through
//! a [`Provider`], which routes by calling role to a configured backend.

mod openai;
mod scripted;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use autonoma_core::fingerprint::{fingerprint, ChatMessage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use openai::OpenAiBackend;
pub use scripted::{CannedBackend, MatchMode, ScriptEntry, ScriptedProvider, WILDCARD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleContext {
    Coordinator,
    Planner,
    Agent,
    Reporter,
}

impl RoleContext {
    pub const ALL: [RoleContext; 4] =
        [RoleContext::Coordinator, RoleContext::Planner, RoleContext::Agent, RoleContext::Reporter];

    pub fn as_str(self) -> &'static str {
        match self {
            RoleContext::Coordinator => "coordinator",
            RoleContext::Planner => "planner",
            RoleContext::Agent => "agent",
            RoleContext::Reporter => "reporter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub temperature: f32,
    pub max_tokens: Option<u32>,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams { temperature: 0.0, max_tokens: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub role_context: RoleContext,
    pub messages: Vec<ChatMessage>,
    pub params: CompletionParams,
}

impl CompletionRequest {
    pub fn new(role_context: RoleContext, messages: Vec<ChatMessage>) -> Self {
        CompletionRequest { role_context, messages, params: CompletionParams::default() }
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.messages)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("provider script exhausted")]
    ScriptExhausted,
    #[error("request fingerprint {found} does not match scripted entry {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("no backend configured for role {0}")]
    NotConfigured(&'static str),
    #[error("request has no messages")]
    EmptyRequest,
    #[error("tripwire backend called for role {0}")]
    Tripwire(&'static str),
}

#[async_trait]
pub trait CompletionBackend: Send + Sync {
    async fn complete(&self, req: &CompletionRequest) -> Result<Completion, ProviderError>;

    /// Shown as `created_by` on plans.
    fn identity(&self) -> String;
}

/// Per-role routing table.
#[derive(Clone, Default)]
pub struct Provider {
    backends: BTreeMap<RoleContext, Arc<dyn CompletionBackend>>,
    fallback: Option<Arc<dyn CompletionBackend>>,
}

impl Provider {
    /// One backend for every role.
    pub fn single(backend: Arc<dyn CompletionBackend>) -> Self {
        Provider { backends: BTreeMap::new(), fallback: Some(backend) }
    }

    pub fn with_role(mut self, role: RoleContext, backend: Arc<dyn CompletionBackend>) -> Self {
        self.backends.insert(role, backend);
        self
    }

    pub fn backend(&self, role: RoleContext) -> Option<&Arc<dyn CompletionBackend>> {
        self.backends.get(&role).or(self.fallback.as_ref())
    }

    pub fn identity(&self, role: RoleContext) -> String {
        self.backend(role).map(|b| b.identity()).unwrap_or_default()
    }

    pub async fn complete(&self, req: &CompletionRequest) -> Result<Completion, ProviderError> {
        if req.messages.is_empty() {
            return Err(ProviderError::EmptyRequest);
        }
        let backend = self.backend(req.role_context).ok_or(ProviderError::NotConfigured(req.role_context.as_str()))?;
        let result = backend.complete(req).await;
        if let Err(e) = &result {
            tracing::debug!(role = req.role_context.as_str(), error = %e, "completion failed");
        }
        result
    }
}

/// Wraps a backend and records every successful exchange as a strict
/// script entry, so a live run can be replayed offline.
pub struct Recorder {
    inner: Arc<dyn CompletionBackend>,
    trace: Mutex<Vec<ScriptEntry>>,
}

impl Recorder {
    pub fn new(inner: Arc<dyn CompletionBackend>) -> Self {
        Recorder { inner, trace: Mutex::new(Vec::new()) }
    }

    pub fn trace(&self) -> Vec<ScriptEntry> {
        self.trace.lock().expect("recorder lock").clone()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.trace()).expect("script entries serialize")
    }

    /// Writes `provider_trace.json` into `dir`.
    pub fn write_trace(&self, dir: &std::path::Path) -> std::io::Result<std::path::PathBuf> {
        let path = dir.join("provider_trace.json");
        std::fs::write(&path, self.to_json())?;
        Ok(path)
    }
}

#[async_trait]
impl CompletionBackend for Recorder {
    async fn complete(&self, req: &CompletionRequest) -> Result<Completion, ProviderError> {
        let out = self.inner.complete(req).await?;
        self.trace
            .lock()
            .expect("recorder lock")
            .push(ScriptEntry { r#match: req.fingerprint(), response: out.text.clone() });
        Ok(out)
    }

    fn identity(&self) -> String {
        self.inner.identity()
    }
}

/// Fails every call and counts them. Installed for roles that must never
/// reach a model.
#[derive(Debug, Default)]
pub struct Tripwire {
    calls: AtomicUsize,
}

impl Tripwire {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl CompletionBackend for Tripwire {
    async fn complete(&self, req: &CompletionRequest) -> Result<Completion, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Err(ProviderError::Tripwire(req.role_context.as_str()))
    }

    fn identity(&self) -> String {
        "tripwire".into()
    }
}

pub(crate) fn rough_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}
