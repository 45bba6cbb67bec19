//! Per-conversation event journal: the single point where events are
//! validated against the state machine, persisted, audited and fanned out.

use std::sync::{Arc, Mutex};

use autonoma_core::audit::AuditEntry;
use autonoma_core::canonical::{digest_of, sha256_hex};
use autonoma_core::{
    transition, EventBody, Message, Role, TransitionError, WorkflowEvent, WorkflowState,
};
use serde_json::json;
use thiserror::Error;
use tokio::sync::broadcast;

use crate::clock::RuntimeClock;
use crate::store::{AuditLog, ConversationWriter, StoreError};

const FANOUT_CAPACITY: usize = 1024;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

struct Inner {
    conversation_id: String,
    state: WorkflowState,
    events: Vec<WorkflowEvent>,
    messages: Vec<Message>,
    writer: Option<ConversationWriter>,
}

/// Cheap to clone; all clones share one log.
#[derive(Clone)]
pub struct Journal {
    inner: Arc<Mutex<Inner>>,
    audit: Option<Arc<AuditLog>>,
    fanout: broadcast::Sender<WorkflowEvent>,
    clock: RuntimeClock,
}

impl Journal {
    /// In-memory journal.
    pub fn new(conversation_id: impl Into<String>, clock: RuntimeClock) -> Self {
        Journal::build(conversation_id.into(), None, None, Vec::new(), Vec::new(), WorkflowState::default(), clock)
    }

    /// Journal backed by a conversation directory, with optional auditing.
    /// Existing events and messages are loaded and replayed.
    pub fn persistent(
        writer: ConversationWriter,
        events: Vec<WorkflowEvent>,
        messages: Vec<Message>,
        audit: Option<Arc<AuditLog>>,
        clock: RuntimeClock,
    ) -> Result<Self, autonoma_core::ReplayError> {
        let state = autonoma_core::replay(&events)?;
        let id = writer.record().id.clone();
        Ok(Journal::build(id, Some(writer), audit, events, messages, state, clock))
    }

    fn build(
        conversation_id: String,
        writer: Option<ConversationWriter>,
        audit: Option<Arc<AuditLog>>,
        events: Vec<WorkflowEvent>,
        messages: Vec<Message>,
        state: WorkflowState,
        clock: RuntimeClock,
    ) -> Self {
        let (fanout, _) = broadcast::channel(FANOUT_CAPACITY);
        Journal {
            inner: Arc::new(Mutex::new(Inner { conversation_id, state, events, messages, writer })),
            audit,
            fanout,
            clock,
        }
    }

    pub fn clock(&self) -> RuntimeClock {
        self.clock
    }

    pub fn conversation_id(&self) -> String {
        self.lock().conversation_id.clone()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().expect("journal lock")
    }

    /// Appends an event stamped with the next seq and the current clock.
    /// An event the state machine rejects is not recorded anywhere.
    pub fn emit(&self, body: EventBody) -> Result<WorkflowEvent, JournalError> {
        let mut inner = self.lock();
        let event = WorkflowEvent::new(inner.state.last_seq + 1, self.clock.now_ms(), body);
        let next = transition(&inner.state, &event)?;
        if let Some(w) = inner.writer.as_mut() {
            w.append_event(&event)?;
        }
        if let Some(audit) = &self.audit {
            audit.append(audit_entry(&inner.conversation_id, &event))?;
        }
        inner.state = next;
        inner.events.push(event.clone());
        let _ = self.fanout.send(event.clone());
        Ok(event)
    }

    pub fn add_message(&self, message: Message) -> Result<(), JournalError> {
        let mut inner = self.lock();
        if let Some(w) = inner.writer.as_mut() {
            w.append_message(&message)?;
            if w.record().title.is_empty() && message.role == Role::User {
                let title: String = message.content.chars().take(60).collect();
                w.set_title(title.trim())?;
            }
        }
        inner.messages.push(message);
        Ok(())
    }

    pub fn state(&self) -> WorkflowState {
        self.lock().state.clone()
    }

    pub fn events(&self) -> Vec<WorkflowEvent> {
        self.lock().events.clone()
    }

    pub fn messages(&self) -> Vec<Message> {
        self.lock().messages.clone()
    }

    pub fn len(&self) -> usize {
        self.lock().events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Backlog after `since` plus a live receiver, taken atomically so no
    /// event falls between them.
    pub fn subscribe_since(&self, since: u64) -> (Vec<WorkflowEvent>, broadcast::Receiver<WorkflowEvent>) {
        let inner = self.lock();
        let backlog = inner.events.iter().filter(|e| e.seq > since).cloned().collect();
        (backlog, self.fanout.subscribe())
    }

    pub fn events_since(&self, since: u64) -> Vec<WorkflowEvent> {
        self.lock().events.iter().filter(|e| e.seq > since).cloned().collect()
    }
}

/// Role or agent responsible for an event.
pub fn actor_of(body: &EventBody) -> String {
    let role = match body {
        EventBody::PromptReceived { .. } => Role::User,
        EventBody::IntentClassified { .. } | EventBody::HandoffToPlanner { .. } => Role::Coordinator,
        EventBody::PlanProposed { .. } => Role::Planner,
        EventBody::TaskSucceeded { agent_id, .. } => return agent_id.clone(),
        EventBody::TaskFailed { agent_id: Some(a), .. } => return a.clone(),
        EventBody::HandoffRecorded { record, agent_id, .. } => {
            if record.from_role == Role::Agent {
                if let Some(a) = agent_id {
                    return a.clone();
                }
            }
            record.from_role
        }
        EventBody::ApprovalResolved { .. } => Role::User,
        EventBody::ReportReady { .. } => Role::Reporter,
        _ => Role::Supervisor,
    };
    role.as_str().to_string()
}

fn audit_entry(conversation_id: &str, event: &WorkflowEvent) -> AuditEntry {
    let payload = serde_json::to_value(&event.body).expect("events serialize");
    let input_digest = digest_of(&json!({
        "conversation_id": conversation_id,
        "seq": event.seq,
        "event": payload,
    }))
    .expect("json digests");
    let output_digest = match &event.body {
        EventBody::TaskSucceeded { summary, artifacts, .. } => {
            digest_of(&json!({ "summary": summary, "artifacts": artifacts })).expect("json digests")
        }
        EventBody::ReportReady { report } => digest_of(report).expect("json digests"),
        EventBody::IntentClassified { reply: Some(m), .. } => sha256_hex(m.content.as_bytes()),
        _ => String::new(),
    };
    AuditEntry {
        timestamp: event.timestamp,
        actor: actor_of(&event.body),
        action: event.kind().to_string(),
        input_digest,
        output_digest,
    }
}
