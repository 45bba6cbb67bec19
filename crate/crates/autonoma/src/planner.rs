//! Plan generation: prompt the planner role, parse strictly, repair once.

use std::collections::BTreeSet;
use std::sync::Arc;

use async_trait::async_trait;
use autonoma_core::fingerprint::ChatMessage;
use autonoma_core::schema::{parse_plan, SchemaViolation};
use autonoma_core::{validate_plan, Capability, Message, PlanError, Role, ValidatedPlan};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::SearchTool;
use crate::provider::{CompletionRequest, Provider, RoleContext};

pub const DEFAULT_PLANNER_PROMPT: &str = include_str!("../prompts/planner.txt");
pub const DEFAULT_REPAIR_PROMPT: &str = include_str!("../prompts/repair.txt");

const CONTEXT_WINDOW: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteSnippet {
    pub source_id: String,
    pub text: String,
}

/// Material gathered before planning.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextNotes {
    pub snippets: Vec<NoteSnippet>,
    pub gathered_at: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub request_text: String,
    /// Prior conversation, oldest first; trimmed to the last few turns.
    pub context: Vec<Message>,
    pub pregathered: Option<ContextNotes>,
    pub capability_vocabulary: BTreeSet<Capability>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlannerError {
    #[error("capability vocabulary is empty")]
    EmptyVocabulary,
    #[error("plan could not be parsed after repair: {0}")]
    PlanParse(SchemaViolation),
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
}

/// Prompt templates. `system` takes `{capabilities}`; `repair` takes
/// `{raw}`, `{error_path}` and `{error_message}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannerPrompts {
    pub system: String,
    pub repair: String,
}

impl Default for PlannerPrompts {
    fn default() -> Self {
        PlannerPrompts { system: DEFAULT_PLANNER_PROMPT.into(), repair: DEFAULT_REPAIR_PROMPT.into() }
    }
}

fn user_prompt(req: &PlanRequest) -> String {
    let mut out = String::new();
    let start = req.context.len().saturating_sub(CONTEXT_WINDOW);
    let context = &req.context[start..];
    if !context.is_empty() {
        out.push_str("Conversation so far:\n");
        for m in context {
            out.push_str(&format!("{}: {}\n", m.role, m.content));
        }
        out.push('\n');
    }
    if let Some(notes) = req.pregathered.as_ref().filter(|n| !n.snippets.is_empty()) {
        out.push_str("Background notes:\n");
        for s in &notes.snippets {
            out.push_str(&format!("- {} (source: {})\n", s.text, s.source_id));
        }
        out.push('\n');
    }
    out.push_str("Request: ");
    out.push_str(&req.request_text);
    out
}

fn check(raw: &str, vocabulary: &BTreeSet<Capability>) -> Result<ValidatedPlan, SchemaViolation> {
    let mut plan = parse_plan(raw, vocabulary)?;
    plan.created_by = "planner".into();
    validate_plan(plan, vocabulary).map_err(|e| {
        let path = match &e {
            PlanError::CyclicDependency(_) | PlanError::EmptyPlan => "/steps".to_string(),
            _ => String::new(),
        };
        SchemaViolation { path, message: e.to_string() }
    })
}

/// One provider call, plus at most one repair call. The returned plan has
/// passed `validate_plan` against the request's vocabulary.
pub async fn make_plan(req: &PlanRequest, provider: &Provider, prompts: &PlannerPrompts) -> Result<ValidatedPlan, PlannerError> {
    if req.capability_vocabulary.is_empty() {
        return Err(PlannerError::EmptyVocabulary);
    }
    let vocab = req.capability_vocabulary.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(", ");
    let mut messages =
        vec![ChatMessage::system(prompts.system.replace("{capabilities}", &vocab)), ChatMessage::user(user_prompt(req))];

    let first = call(provider, &messages).await?;
    let violation = match check(&first, &req.capability_vocabulary) {
        Ok(plan) => return Ok(plan),
        Err(v) => v,
    };
    tracing::debug!(path = %violation.path, "plan rejected, requesting repair");
    let path = if violation.path.is_empty() { "/" } else { violation.path.as_str() };
    let repair = prompts
        .repair
        .replace("{error_path}", path)
        .replace("{error_message}", &violation.message)
        .replace("{raw}", &first);
    messages.push(ChatMessage::assistant(first));
    messages.push(ChatMessage::user(repair));
    let second = call(provider, &messages).await?;
    check(&second, &req.capability_vocabulary).map_err(PlannerError::PlanParse)
}

async fn call(provider: &Provider, messages: &[ChatMessage]) -> Result<String, PlannerError> {
    let req = CompletionRequest::new(RoleContext::Planner, messages.to_vec());
    provider.complete(&req).await.map(|c| c.text).map_err(|e| PlannerError::ProviderUnavailable(e.to_string()))
}

/// Preliminary research. Tools take turns; the n-th call to a tool keeps
/// its n-th result, so repeated calls add new material. A tool that errors
/// or runs dry leaves the rotation. At most `budget` calls are made.
pub async fn pregather(request_text: &str, tools: &[Arc<dyn SearchTool>], budget: u32, now_ms: u64) -> ContextNotes {
    let mut notes = ContextNotes { snippets: Vec::new(), gathered_at: now_ms };
    let mut active: Vec<(usize, &Arc<dyn SearchTool>)> = tools.iter().map(|t| (0usize, t)).collect();
    let mut calls = 0;
    let mut turn = 0;
    while calls < budget && !active.is_empty() {
        let i = turn % active.len();
        let (served, tool) = &mut active[i];
        calls += 1;
        let wanted = *served + 1;
        match tool.search(request_text, wanted).await {
            Ok(results) if results.len() >= wanted => {
                let s = &results[wanted - 1];
                *served = wanted;
                if !notes.snippets.iter().any(|n| n.source_id == s.source_id) {
                    notes.snippets.push(NoteSnippet { source_id: s.source_id.clone(), text: s.text.clone() });
                }
                turn += 1;
            }
            Ok(_) => {
                active.remove(i);
            }
            Err(e) => {
                tracing::debug!(tool = tool.name(), error = %e, "pregather tool failed");
                active.remove(i);
            }
        }
    }
    notes
}

/// The planner role as the engine sees it.
#[async_trait]
pub trait Planner: Send + Sync {
    /// Accepts a handoff from the coordinator. The engine bounds the wait
    /// by the ack timeout.
    async fn acknowledge(&self, _payload_digest: &str) -> bool {
        true
    }

    async fn plan(&self, req: &PlanRequest) -> Result<ValidatedPlan, PlannerError>;
}

/// Provider-backed planner.
pub struct LlmPlanner {
    provider: Arc<Provider>,
    prompts: PlannerPrompts,
}

impl LlmPlanner {
    pub fn new(provider: Arc<Provider>) -> Self {
        LlmPlanner { provider, prompts: PlannerPrompts::default() }
    }

    pub fn with_prompts(mut self, prompts: PlannerPrompts) -> Self {
        self.prompts = prompts;
        self
    }
}

#[async_trait]
impl Planner for LlmPlanner {
    async fn plan(&self, req: &PlanRequest) -> Result<ValidatedPlan, PlannerError> {
        make_plan(req, &self.provider, &self.prompts).await
    }
}

/// Returns the same plan for every request, validated against the
/// request's vocabulary. Used for offline runs and benchmarks.
pub struct FixedPlanner {
    plan: autonoma_core::Plan,
}

impl FixedPlanner {
    pub fn new(plan: autonoma_core::Plan) -> Self {
        FixedPlanner { plan }
    }
}

#[async_trait]
impl Planner for FixedPlanner {
    async fn plan(&self, req: &PlanRequest) -> Result<ValidatedPlan, PlannerError> {
        validate_plan(self.plan.clone(), &req.capability_vocabulary).map_err(|e| {
            PlannerError::PlanParse(SchemaViolation { path: "/steps".into(), message: e.to_string() })
        })
    }
}

/// Conversation turns worth showing the planner.
pub(crate) fn history_for_planning(messages: &[Message]) -> Vec<Message> {
    messages.iter().filter(|m| matches!(m.role, Role::User | Role::Coordinator | Role::Reporter)).cloned().collect()
}
