//! Workflow events: the append-only record every conversation is built from.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::message::{ArtifactRef, Message, Role};
use crate::plan::{Plan, StepId};
use crate::report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentClass {
    CasualChat,
    Harmful,
    Ambiguous,
    Task,
}

impl IntentClass {
    pub fn as_str(self) -> &'static str {
        match self {
            IntentClass::CasualChat => "casual_chat",
            IntentClass::Harmful => "harmful",
            IntentClass::Ambiguous => "ambiguous",
            IntentClass::Task => "task",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "casual_chat" | "casualchat" | "chat" | "casual" => Some(IntentClass::CasualChat),
            "harmful" => Some(IntentClass::Harmful),
            "ambiguous" => Some(IntentClass::Ambiguous),
            "task" => Some(IntentClass::Task),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intent {
    pub class: IntentClass,
    pub confidence: f64,
    pub cues: Vec<String>,
}

/// One recorded transfer of responsibility between roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandoffRecord {
    pub from_role: Role,
    pub to_role: Role,
    pub payload_digest: String,
    pub accepted: bool,
    pub timestamp: u64,
}

/// Why an attempt, a task or a workflow failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FailureCause {
    Timeout,
    Stalled,
    AckTimeout,
    AgentPanic { message: String },
    PrivilegeViolation { detail: String },
    ApprovalDenied,
    NoCapableAgent { capability: String },
    AgentError { message: String },
    HookRejected { hook_id: String, reason: String },
    PlanParse { path: String, message: String },
    ProviderUnavailable { message: String },
    Cancelled,
}

impl FailureCause {
    pub fn tag(&self) -> &'static str {
        match self {
            FailureCause::Timeout => "timeout",
            FailureCause::Stalled => "stalled",
            FailureCause::AckTimeout => "ack_timeout",
            FailureCause::AgentPanic { .. } => "agent_panic",
            FailureCause::PrivilegeViolation { .. } => "privilege_violation",
            FailureCause::ApprovalDenied => "approval_denied",
            FailureCause::NoCapableAgent { .. } => "no_capable_agent",
            FailureCause::AgentError { .. } => "agent_error",
            FailureCause::HookRejected { .. } => "hook_rejected",
            FailureCause::PlanParse { .. } => "plan_parse",
            FailureCause::ProviderUnavailable { .. } => "provider_unavailable",
            FailureCause::Cancelled => "cancelled",
        }
    }

    /// Failures that a retry cannot fix.
    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            FailureCause::ApprovalDenied
                | FailureCause::NoCapableAgent { .. }
                | FailureCause::HookRejected { .. }
                | FailureCause::PrivilegeViolation { .. }
                | FailureCause::Cancelled
        )
    }

    /// True when the agent handed a result back, as opposed to the supervisor
    /// giving up on it.
    pub fn result_delivered(&self) -> bool {
        !matches!(
            self,
            FailureCause::Timeout | FailureCause::Stalled | FailureCause::AckTimeout | FailureCause::Cancelled
        )
    }
}

impl fmt::Display for FailureCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureCause::AgentPanic { message } | FailureCause::AgentError { message } => {
                write!(f, "{}: {}", self.tag(), message)
            }
            FailureCause::PrivilegeViolation { detail } => write!(f, "privilege_violation: {detail}"),
            FailureCause::NoCapableAgent { capability } => write!(f, "no_capable_agent: {capability}"),
            FailureCause::HookRejected { hook_id, reason } => write!(f, "hook_rejected[{hook_id}]: {reason}"),
            FailureCause::PlanParse { path, message } => write!(f, "plan_parse at {path}: {message}"),
            FailureCause::ProviderUnavailable { message } => write!(f, "provider_unavailable: {message}"),
            other => f.write_str(other.tag()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CloseReason {
    Completed,
    Rejected,
    Failed { cause: FailureCause },
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskOutcome {
    Succeeded { artifacts: Vec<ArtifactRef>, summary: String },
    Failed { cause: FailureCause, attempts: u32 },
    /// Never attempted because `blocked_by` failed.
    Skipped { blocked_by: StepId },
}

/// Execution record of one plan step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskResult {
    pub step_id: StepId,
    pub outcome: TaskOutcome,
    pub duration_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_id: Option<String>,
}

impl TaskResult {
    pub fn succeeded(&self) -> bool {
        matches!(self.outcome, TaskOutcome::Succeeded { .. })
    }
}

/// Kind-specific event payloads. Serialized adjacently as
/// `{"kind": "...", "payload": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    PromptReceived {
        message: Message,
    },
    IntentClassified {
        intent: Intent,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reply: Option<Message>,
    },
    HandoffToPlanner {
        payload_digest: String,
    },
    PlanProposed {
        plan: Plan,
        levels: Vec<Vec<StepId>>,
        retry_limit: u32,
    },
    TaskDispatched {
        step_id: StepId,
        agent_id: String,
        attempt: u32,
        description: String,
    },
    Heartbeat {
        step_id: StepId,
        attempt: u32,
    },
    TaskRetried {
        step_id: StepId,
        attempt: u32,
        cause: FailureCause,
        backoff_ms: u64,
    },
    TaskSucceeded {
        step_id: StepId,
        agent_id: String,
        attempts: u32,
        summary: String,
        artifacts: Vec<ArtifactRef>,
        duration_ms: u64,
    },
    TaskFailed {
        step_id: StepId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        agent_id: Option<String>,
        cause: FailureCause,
        attempts: u32,
    },
    HandoffRecorded {
        record: HandoffRecord,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step_id: Option<StepId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        agent_id: Option<String>,
    },
    ApprovalRequested {
        step_id: StepId,
        action_digest: String,
        description: String,
    },
    ApprovalResolved {
        step_id: StepId,
        action_digest: String,
        approved: bool,
    },
    ReportReady {
        report: Report,
    },
    WorkflowClosed {
        reason: CloseReason,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::PromptReceived { .. } => "PromptReceived",
            EventBody::IntentClassified { .. } => "IntentClassified",
            EventBody::HandoffToPlanner { .. } => "HandoffToPlanner",
            EventBody::PlanProposed { .. } => "PlanProposed",
            EventBody::TaskDispatched { .. } => "TaskDispatched",
            EventBody::Heartbeat { .. } => "Heartbeat",
            EventBody::TaskRetried { .. } => "TaskRetried",
            EventBody::TaskSucceeded { .. } => "TaskSucceeded",
            EventBody::TaskFailed { .. } => "TaskFailed",
            EventBody::HandoffRecorded { .. } => "HandoffRecorded",
            EventBody::ApprovalRequested { .. } => "ApprovalRequested",
            EventBody::ApprovalResolved { .. } => "ApprovalResolved",
            EventBody::ReportReady { .. } => "ReportReady",
            EventBody::WorkflowClosed { .. } => "WorkflowClosed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowEvent {
    pub seq: u64,
    pub timestamp: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

impl WorkflowEvent {
    pub fn new(seq: u64, timestamp: u64, body: EventBody) -> Self {
        WorkflowEvent { seq, timestamp, body }
    }

    pub fn kind(&self) -> &'static str {
        self.body.kind()
    }
}
