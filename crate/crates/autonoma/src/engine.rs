//! The conversation pipeline: coordinator gate, planner handoff, supervised
//! execution and reporting, all recorded through a conversation's journal.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use autonoma_core::canonical::digest_of;
use autonoma_core::report::Report;
use autonoma_core::{
    validate_plan, ArtifactRef, CloseReason, EventBody, ExecutionPolicy, FailureCause, HandoffRecord, IntentClass,
    Message, Plan, Role, TaskResult, ValidatedPlan, WorkflowStatus,
};
use serde_json::json;
use thiserror::Error;
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;

use crate::agentkit::{ArtifactDir, ArtifactSink, HookPayload, HookRegistry, HookStage, Registry, TokenStore};
use crate::agents::{compile_report, render_markdown, write_failure_log, SearchTool};
use crate::clock::RuntimeClock;
use crate::coordinator::{reply_lang, reply_text, Coordinator};
use crate::journal::{Journal, JournalError};
use crate::planner::{history_for_planning, pregather, PlanRequest, Planner, PlannerError};
use crate::provider::Provider;
use crate::store::{is_valid_conversation_id, new_conversation_id, AuditLog, ConversationRecord, Store, StoreError};
use crate::supervisor::{run_workflow, ApprovalError, Control, DispatchStrategy, LevelFifo, SupervisorEnv};

pub const REPORT_FILE: &str = "report.md";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("conversation is busy with an active workflow")]
    Busy,
    #[error("conversation `{0}` not found")]
    NotFound(String),
    #[error("`{0}` is not a valid conversation id")]
    InvalidId(String),
    #[error("conversation `{0}` already exists")]
    Exists(String),
    #[error("no workflow is running")]
    NoActiveWorkflow,
    #[error(transparent)]
    Approval(#[from] ApprovalError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("stored log does not replay: {0}")]
    Replay(#[from] autonoma_core::ReplayError),
}

/// Per-turn knobs that are not part of the execution policy.
#[derive(Debug, Clone)]
pub struct EngineSettings {
    pub policy: ExecutionPolicy,
    /// Search calls made before planning; 0 disables pre-gathering.
    pub pregather_budget: u32,
    /// Whether the reporter asks the provider for a narrative.
    pub narrative: bool,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings { policy: ExecutionPolicy::default(), pregather_budget: 0, narrative: true }
    }
}

/// How a turn ended.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnOutcome {
    pub intent: IntentClass,
    pub status: WorkflowStatus,
    pub report: Option<Report>,
    pub results: Vec<TaskResult>,
}

struct ActiveRun {
    cancel: watch::Sender<bool>,
    controls: Option<mpsc::UnboundedSender<Control>>,
}

/// One conversation: its journal plus the handles of the running turn.
pub struct Conversation {
    journal: Journal,
    active: Mutex<Option<ActiveRun>>,
}

impl Conversation {
    pub fn journal(&self) -> &Journal {
        &self.journal
    }

    pub fn id(&self) -> String {
        self.journal.conversation_id()
    }

    pub fn is_busy(&self) -> bool {
        self.active.lock().expect("active lock").is_some() || !self.journal.state().accepts_prompt()
    }
}

pub struct EngineBuilder {
    coordinator: Arc<Coordinator>,
    planner: Arc<dyn Planner>,
    provider: Arc<Provider>,
    registry: Arc<Registry>,
    hooks: Arc<HookRegistry>,
    tokens: Arc<TokenStore>,
    search_tools: Vec<Arc<dyn SearchTool>>,
    strategy: Arc<dyn DispatchStrategy>,
    settings: EngineSettings,
    clock: Option<RuntimeClock>,
    store: Option<Store>,
    audit: bool,
}

impl EngineBuilder {
    pub fn hooks(mut self, hooks: Arc<HookRegistry>) -> Self {
        self.hooks = hooks;
        self
    }

    pub fn tokens(mut self, tokens: Arc<TokenStore>) -> Self {
        self.tokens = tokens;
        self
    }

    pub fn search_tools(mut self, tools: Vec<Arc<dyn SearchTool>>) -> Self {
        self.search_tools = tools;
        self
    }

    pub fn strategy(mut self, strategy: Arc<dyn DispatchStrategy>) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn settings(mut self, settings: EngineSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn clock(mut self, clock: RuntimeClock) -> Self {
        self.clock = Some(clock);
        self
    }

    /// Persists conversations under `store`; `audit` adds the global
    /// hash-chained audit log.
    pub fn store(mut self, store: Store, audit: bool) -> Self {
        self.store = Some(store);
        self.audit = audit;
        self
    }

    pub fn build(self) -> Result<Engine, EngineError> {
        let audit = match (&self.store, self.audit) {
            (Some(store), true) => Some(Arc::new(AuditLog::open(store.audit_path())?)),
            _ => None,
        };
        Ok(Engine {
            inner: Arc::new(Inner {
                coordinator: self.coordinator,
                planner: self.planner,
                provider: self.provider,
                registry: self.registry,
                hooks: self.hooks,
                tokens: self.tokens,
                search_tools: self.search_tools,
                strategy: self.strategy,
                settings: self.settings,
                clock: self.clock.unwrap_or_else(RuntimeClock::wall),
                store: self.store,
                audit,
                conversations: Mutex::new(HashMap::new()),
            }),
        })
    }
}

struct Inner {
    coordinator: Arc<Coordinator>,
    planner: Arc<dyn Planner>,
    provider: Arc<Provider>,
    registry: Arc<Registry>,
    hooks: Arc<HookRegistry>,
    tokens: Arc<TokenStore>,
    search_tools: Vec<Arc<dyn SearchTool>>,
    strategy: Arc<dyn DispatchStrategy>,
    settings: EngineSettings,
    clock: RuntimeClock,
    store: Option<Store>,
    audit: Option<Arc<AuditLog>>,
    conversations: Mutex<HashMap<String, Arc<Conversation>>>,
}

/// Cheap to clone.
#[derive(Clone)]
pub struct Engine {
    inner: Arc<Inner>,
}

impl Engine {
    pub fn builder(
        coordinator: Arc<Coordinator>,
        planner: Arc<dyn Planner>,
        provider: Arc<Provider>,
        registry: Arc<Registry>,
    ) -> EngineBuilder {
        EngineBuilder {
            coordinator,
            planner,
            provider,
            registry,
            hooks: Arc::new(HookRegistry::new()),
            tokens: Arc::new(TokenStore::new()),
            search_tools: Vec::new(),
            strategy: Arc::new(LevelFifo),
            settings: EngineSettings::default(),
            clock: None,
            store: None,
            audit: false,
        }
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.inner.registry
    }

    pub fn hooks(&self) -> &Arc<HookRegistry> {
        &self.inner.hooks
    }

    pub fn tokens(&self) -> &Arc<TokenStore> {
        &self.inner.tokens
    }

    pub fn store(&self) -> Option<&Store> {
        self.inner.store.as_ref()
    }

    pub fn audit(&self) -> Option<&Arc<AuditLog>> {
        self.inner.audit.as_ref()
    }

    pub fn clock(&self) -> RuntimeClock {
        self.inner.clock
    }

    /// Starts a new conversation.
    pub fn new_conversation(&self) -> Result<Arc<Conversation>, EngineError> {
        self.new_conversation_with_id(&new_conversation_id())
    }

    /// Starts a conversation under a caller-chosen id, which must be a
    /// lowercase hyphenated UUID not yet in use.
    pub fn new_conversation_with_id(&self, id: &str) -> Result<Arc<Conversation>, EngineError> {
        if !is_valid_conversation_id(id) {
            return Err(EngineError::InvalidId(id.to_string()));
        }
        let taken = self.inner.conversations.lock().expect("conversations lock").contains_key(id)
            || self.inner.store.as_ref().is_some_and(|s| s.exists(id));
        if taken {
            return Err(EngineError::Exists(id.to_string()));
        }
        let id = id.to_string();
        let journal = match &self.inner.store {
            Some(store) => {
                let writer = store.create(ConversationRecord::new(&id, "", self.inner.clock.now_ms()))?;
                Journal::persistent(writer, Vec::new(), Vec::new(), self.inner.audit.clone(), self.inner.clock)?
            }
            None => Journal::new(id.clone(), self.inner.clock),
        };
        let conv = Arc::new(Conversation { journal, active: Mutex::new(None) });
        self.inner.conversations.lock().expect("conversations lock").insert(id, conv.clone());
        Ok(conv)
    }

    /// A live conversation, or one reloaded from the store. A workflow that
    /// was open when the process stopped is closed as cancelled.
    pub fn conversation(&self, id: &str) -> Result<Arc<Conversation>, EngineError> {
        let mut map = self.inner.conversations.lock().expect("conversations lock");
        if let Some(c) = map.get(id) {
            return Ok(c.clone());
        }
        let store = self.inner.store.as_ref().ok_or_else(|| EngineError::NotFound(id.to_string()))?;
        if !store.exists(id) {
            return Err(EngineError::NotFound(id.to_string()));
        }
        let (_, messages, events) = store.load_conversation(id)?;
        let writer = store.writer(id)?;
        let journal = Journal::persistent(writer, events, messages, self.inner.audit.clone(), self.inner.clock)?;
        let state = journal.state();
        if !state.accepts_prompt() && !state.closed && state.workflows > 0 {
            tracing::info!(conversation = id, status = %state.status, "closing workflow interrupted by restart");
            journal.emit(EventBody::WorkflowClosed { reason: CloseReason::Cancelled })?;
        }
        let conv = Arc::new(Conversation { journal, active: Mutex::new(None) });
        map.insert(id.to_string(), conv.clone());
        Ok(conv)
    }

    pub fn list_conversations(&self) -> Result<Vec<ConversationRecord>, EngineError> {
        match &self.inner.store {
            Some(s) => Ok(s.list_conversations()?),
            None => {
                let map = self.inner.conversations.lock().expect("conversations lock");
                let mut out: Vec<ConversationRecord> = map
                    .values()
                    .map(|c| {
                        let title = c
                            .journal
                            .messages()
                            .iter()
                            .find(|m| m.role == Role::User)
                            .map(|m| m.content.chars().take(60).collect::<String>())
                            .unwrap_or_default();
                        let mut r = ConversationRecord::new(c.id(), title.trim(), 0);
                        r.message_count = c.journal.messages().len() as u64;
                        r.event_count = c.journal.len() as u64;
                        r
                    })
                    .collect();
                out.sort_by(|a, b| a.id.cmp(&b.id));
                Ok(out)
            }
        }
    }

    /// Records the prompt and starts the turn in the background. Fails with
    /// `Busy` while a workflow is open.
    pub fn submit(
        &self,
        conv: &Arc<Conversation>,
        text: &str,
        attachments: Vec<ArtifactRef>,
    ) -> Result<JoinHandle<Result<TurnOutcome, EngineError>>, EngineError> {
        let (cancel_tx, cancel_rx) = watch::channel(false);
        let message = {
            let mut active = conv.active.lock().expect("active lock");
            if active.is_some() {
                return Err(EngineError::Busy);
            }
            let now = self.inner.clock.now_ms();
            let mut message = Message::new(next_message_id(&conv.journal), Role::User, text, autonoma_core::detect_language(text), now);
            message.attachments = attachments;
            match conv.journal.emit(EventBody::PromptReceived { message: message.clone() }) {
                Ok(_) => {}
                Err(JournalError::Transition(_)) => return Err(EngineError::Busy),
                Err(e) => return Err(e.into()),
            }
            *active = Some(ActiveRun { cancel: cancel_tx, controls: None });
            message
        };
        conv.journal.add_message(message.clone())?;
        let inner = self.inner.clone();
        let conv = conv.clone();
        Ok(tokio::spawn(async move {
            let result = run_turn(&inner, &conv, message, cancel_rx).await;
            *conv.active.lock().expect("active lock") = None;
            result
        }))
    }

    /// Submits and waits for the turn to finish.
    pub async fn prompt(&self, conv: &Arc<Conversation>, text: &str) -> Result<TurnOutcome, EngineError> {
        let handle = self.submit(conv, text, Vec::new())?;
        handle.await.expect("turn task panicked")
    }

    /// Requests cancellation of the running turn.
    pub fn cancel(&self, conv: &Conversation) -> Result<(), EngineError> {
        let active = conv.active.lock().expect("active lock");
        let run = active.as_ref().ok_or(EngineError::NoActiveWorkflow)?;
        let _ = run.cancel.send(true);
        Ok(())
    }

    /// Resolves the pending approval whose digest is `action_digest`.
    pub async fn resolve_approval(&self, conv: &Conversation, action_digest: &str, approved: bool) -> Result<(), EngineError> {
        let controls = {
            let active = conv.active.lock().expect("active lock");
            active.as_ref().and_then(|r| r.controls.clone()).ok_or(EngineError::NoActiveWorkflow)?
        };
        let (reply, rx) = oneshot::channel();
        controls
            .send(Control::ResolveApproval { action_digest: action_digest.to_string(), approved, reply })
            .map_err(|_| EngineError::NoActiveWorkflow)?;
        rx.await.map_err(|_| EngineError::NoActiveWorkflow)?.map_err(EngineError::from)
    }
}

fn next_message_id(journal: &Journal) -> String {
    format!("m{}", journal.messages().len() + 1)
}

fn handoff(from: Role, to: Role, digest: String, accepted: bool, ts: u64) -> HandoffRecord {
    HandoffRecord { from_role: from, to_role: to, payload_digest: digest, accepted, timestamp: ts }
}

fn outcome(journal: &Journal, intent: IntentClass) -> TurnOutcome {
    TurnOutcome { intent, status: journal.state().status, report: None, results: Vec::new() }
}

fn close_failed(journal: &Journal, intent: IntentClass, cause: FailureCause) -> Result<TurnOutcome, EngineError> {
    tracing::info!(cause = %cause, "workflow failed before execution");
    journal.emit(EventBody::WorkflowClosed { reason: CloseReason::Failed { cause } })?;
    Ok(outcome(journal, intent))
}

fn hook_cause(rej: crate::agentkit::HookRejection) -> FailureCause {
    FailureCause::HookRejected { hook_id: rej.hook_id, reason: rej.reason }
}

async fn run_turn(
    inner: &Inner,
    conv: &Conversation,
    message: Message,
    mut cancel: watch::Receiver<bool>,
) -> Result<TurnOutcome, EngineError> {
    let journal = &conv.journal;
    let clock = inner.clock;
    let policy = inner.settings.policy;

    let all = journal.messages();
    let history = &all[..all.len().saturating_sub(1)];
    let clarifications = journal.state().clarifications;
    let intent = inner.coordinator.classify(&message, history, clarifications).await;
    let class = intent.class;
    let lang = reply_lang(&message.content);
    let reply = Message::new(next_message_id(journal), Role::Coordinator, reply_text(class, lang), lang, clock.now_ms());
    journal.emit(EventBody::IntentClassified { intent, reply: Some(reply.clone()) })?;
    journal.add_message(reply)?;

    match class {
        IntentClass::CasualChat => {
            journal.emit(EventBody::WorkflowClosed { reason: CloseReason::Completed })?;
            return Ok(outcome(journal, class));
        }
        IntentClass::Harmful => {
            journal.emit(EventBody::WorkflowClosed { reason: CloseReason::Rejected })?;
            return Ok(outcome(journal, class));
        }
        IntentClass::Ambiguous => return Ok(outcome(journal, class)),
        IntentClass::Task => {}
    }

    // Coordinator → planner.
    let context = history_for_planning(history);
    let mut request_text = message.content.clone();
    let payload_digest = digest_of(&json!({ "request": request_text, "context": context.len() })).expect("json digests");
    journal.emit(EventBody::HandoffToPlanner { payload_digest: payload_digest.clone() })?;
    let mut accepted = false;
    for attempt in 1..=policy.max_attempts() {
        let ack = tokio::time::timeout(Duration::from_millis(policy.ack_timeout_ms), inner.planner.acknowledge(&payload_digest));
        accepted = matches!(ack.await, Ok(true));
        journal.emit(EventBody::HandoffRecorded {
            record: handoff(Role::Coordinator, Role::Planner, payload_digest.clone(), accepted, clock.now_ms()),
            step_id: None,
            agent_id: None,
        })?;
        if accepted {
            break;
        }
        if attempt < policy.max_attempts() {
            tokio::time::sleep(Duration::from_millis(policy.backoff.delay_ms(attempt))).await;
        }
    }
    if !accepted {
        return close_failed(journal, class, FailureCause::AckTimeout);
    }

    match inner.hooks.run(HookStage::PrePlan, HookPayload::Request(request_text.clone())) {
        Ok(HookPayload::Request(t)) => request_text = t,
        Ok(_) => {}
        Err(rej) => return close_failed(journal, class, hook_cause(rej)),
    }

    inner.registry.begin_workflow();
    let pregathered = if inner.settings.pregather_budget > 0 && !inner.search_tools.is_empty() {
        Some(pregather(&request_text, &inner.search_tools, inner.settings.pregather_budget, clock.now_ms()).await)
    } else {
        None
    };
    let vocabulary = inner.registry.vocabulary();
    let req = PlanRequest { request_text, context, pregathered, capability_vocabulary: vocabulary.clone() };
    let planned = tokio::select! {
        biased;
        _ = wait_cancel(&mut cancel) => {
            journal.emit(EventBody::WorkflowClosed { reason: CloseReason::Cancelled })?;
            return Ok(outcome(journal, class));
        }
        p = inner.planner.plan(&req) => p,
    };
    let plan = match planned {
        Ok(p) => p,
        Err(PlannerError::PlanParse(v)) => {
            return close_failed(journal, class, FailureCause::PlanParse { path: v.path, message: v.message })
        }
        Err(PlannerError::ProviderUnavailable(m)) => {
            return close_failed(journal, class, FailureCause::ProviderUnavailable { message: m })
        }
        Err(PlannerError::EmptyVocabulary) => {
            let cause = FailureCause::NoCapableAgent { capability: "*".into() };
            return close_failed(journal, class, cause);
        }
    };
    let plan: ValidatedPlan = match inner.hooks.run(HookStage::PostPlan, HookPayload::Plan(plan.plan().clone())) {
        Ok(HookPayload::Plan(p)) if &p == plan.plan() => plan,
        Ok(HookPayload::Plan(p)) => match validate_plan(p, &vocabulary) {
            Ok(v) => v,
            Err(e) => {
                let cause = FailureCause::PlanParse { path: "/steps".into(), message: e.to_string() };
                return close_failed(journal, class, cause);
            }
        },
        Ok(_) => plan,
        Err(rej) => return close_failed(journal, class, hook_cause(rej)),
    };

    // Execution.
    let (ctl_tx, ctl_rx) = mpsc::unbounded_channel();
    if let Some(run) = conv.active.lock().expect("active lock").as_mut() {
        run.controls = Some(ctl_tx);
    }
    let artifacts: Option<Arc<dyn ArtifactSink>> =
        inner.store.as_ref().map(|s| Arc::new(ArtifactDir::new(s.clone(), conv.id())) as Arc<dyn ArtifactSink>);
    let env = SupervisorEnv {
        journal: journal.clone(),
        registry: inner.registry.clone(),
        hooks: inner.hooks.clone(),
        policy,
        lang,
        artifacts: artifacts.clone(),
        tokens: inner.tokens.clone(),
        cancel: cancel.clone(),
        controls: Some(ctl_rx),
        strategy: inner.strategy.clone(),
    };
    let run = run_workflow(&plan, env).await?;
    if run.cancelled {
        return Ok(TurnOutcome { results: run.results, ..outcome(journal, class) });
    }

    // Reporting.
    let mut results = run.results;
    let digest = digest_of(&results).expect("results serialize");
    journal.emit(EventBody::HandoffRecorded {
        record: handoff(Role::Supervisor, Role::Reporter, digest, true, clock.now_ms()),
        step_id: None,
        agent_id: None,
    })?;
    match inner.hooks.run(HookStage::PreReport, HookPayload::Results(results.clone())) {
        Ok(HookPayload::Results(r)) => results = r,
        Ok(_) => {}
        Err(rej) => return close_failed(journal, class, hook_cause(rej)),
    }
    let provider = inner.settings.narrative.then_some(inner.provider.as_ref());
    let mut report = match compile_report(plan.plan(), &results, lang, provider).await {
        Ok(r) => r,
        Err(e) => {
            let cause = FailureCause::AgentError { message: e.to_string() };
            return close_failed(journal, class, cause);
        }
    };
    match inner.hooks.run(HookStage::PostReport, HookPayload::Report(report.clone())) {
        Ok(HookPayload::Report(r)) => report = r,
        Ok(_) => {}
        Err(rej) => return close_failed(journal, class, hook_cause(rej)),
    }
    let markdown = render_markdown(&report);
    if let Some(sink) = &artifacts {
        if let Err(e) = write_failure_log(&report, sink.as_ref()) {
            tracing::warn!(error = %e, "could not write failure log");
        }
        if let Err(e) = sink.write_artifact(REPORT_FILE, markdown.as_bytes()) {
            tracing::warn!(error = %e, "could not write report");
        }
    }
    journal.emit(EventBody::ReportReady { report: report.clone() })?;
    let msg = Message::new(next_message_id(journal), Role::Reporter, markdown, report.lang, clock.now_ms());
    journal.add_message(msg)?;
    journal.emit(EventBody::WorkflowClosed { reason: CloseReason::Completed })?;
    Ok(TurnOutcome { intent: class, status: journal.state().status, report: Some(report), results })
}

async fn wait_cancel(rx: &mut watch::Receiver<bool>) {
    loop {
        if *rx.borrow_and_update() {
            return;
        }
        if rx.changed().await.is_err() {
            std::future::pending::<()>().await;
        }
    }
}

/// Convenience for callers that only need the final plan.
pub fn plan_of(journal: &Journal) -> Option<Plan> {
    journal.state().plan
}

