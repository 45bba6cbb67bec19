//! The workflow state machine.
//!
//! A conversation is a sequence of workflows; each starts with a
//! `PromptReceived` and ends with a `WorkflowClosed`. [`transition`] is the
//! only way state changes, and [`replay`] folds it over an event log.
//!
//! ```text
//! Created ──IntentClassified{task}──────► Planning ──PlanProposed──► Executing
//!    │  ├──{ambiguous}──► AwaitingClarification ──PromptReceived──► Created
//!    │  ├──{harmful}────► Rejected                                   │   ▲
//!    │  └──{casual}─────► Complete       ApprovalRequested ◄─────────┘   │
//!    │                                   AwaitingApproval ─ApprovalResolved
//!    │                         every task terminal: Executing ──► Reporting
//! Reporting ──WorkflowClosed{completed}──► Complete | PartialFailure | Failed
//! any open status ──WorkflowClosed{failed|cancelled}──► Failed
//! closed terminal ──PromptReceived──► Created (next workflow)
//! ```

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{CloseReason, EventBody, IntentClass, WorkflowEvent};
use crate::message::Role;
use crate::plan::{Plan, StepId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum WorkflowStatus {
    #[default]
    Created,
    AwaitingClarification,
    Planning,
    Executing,
    AwaitingApproval,
    Reporting,
    Complete,
    PartialFailure,
    Failed,
    Rejected,
}

impl WorkflowStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            WorkflowStatus::Complete | WorkflowStatus::PartialFailure | WorkflowStatus::Failed | WorkflowStatus::Rejected
        )
    }
}

impl fmt::Display for WorkflowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskPhase {
    Pending,
    Dispatched,
    Running,
    Stalled,
    Retrying,
    Succeeded,
    Failed,
    Skipped,
}

impl TaskPhase {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskPhase::Succeeded | TaskPhase::Failed | TaskPhase::Skipped)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStatus {
    pub phase: TaskPhase,
    pub attempts: u32,
    pub last_heartbeat: Option<u64>,
}

impl TaskStatus {
    fn pending() -> Self {
        TaskStatus { phase: TaskPhase::Pending, attempts: 0, last_heartbeat: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WorkflowState {
    pub status: WorkflowStatus,
    pub task_states: BTreeMap<StepId, TaskStatus>,
    pub plan: Option<Plan>,
    /// Seq of the last applied event; 0 before the first.
    pub last_seq: u64,
    /// Workflows started in this conversation.
    pub workflows: u32,
    /// A prompt was received and awaits classification.
    pub prompt_pending: bool,
    /// Consecutive clarification requests for the current prompt.
    pub clarifications: u32,
    pub handed_off: bool,
    pub retry_limit: u32,
    /// Step id → action digest for destructive actions awaiting a decision.
    pub pending_approvals: BTreeMap<StepId, alloc::string::String>,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransitionError {
    #[error("expected seq {expected}, got {found}")]
    OutOfSequence { expected: u64, found: u64 },
    #[error("illegal {kind} in status {status}: {reason}")]
    IllegalTransition { status: WorkflowStatus, kind: &'static str, reason: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("gap in sequence at index {index}: expected {expected}, found {found}")]
    GapInSequence { index: usize, expected: u64, found: u64 },
    #[error("event {index}: {source}")]
    IllegalTransition { index: usize, source: TransitionError },
}

/// Applies one event, returning the successor state.
pub fn transition(state: &WorkflowState, event: &WorkflowEvent) -> Result<WorkflowState, TransitionError> {
    let mut next = state.clone();
    next.apply(event)?;
    Ok(next)
}

/// Folds [`transition`] over a gapless log starting at seq 1.
pub fn replay(events: &[WorkflowEvent]) -> Result<WorkflowState, ReplayError> {
    let mut state = WorkflowState::default();
    for (index, event) in events.iter().enumerate() {
        let expected = index as u64 + 1;
        if event.seq != expected {
            return Err(ReplayError::GapInSequence { index, expected, found: event.seq });
        }
        state.apply(event).map_err(|source| ReplayError::IllegalTransition { index, source })?;
    }
    Ok(state)
}

impl WorkflowState {
    pub fn task(&self, id: &StepId) -> Option<&TaskStatus> {
        self.task_states.get(id)
    }

    /// Whether the conversation may accept a new user prompt.
    pub fn accepts_prompt(&self) -> bool {
        match self.status {
            WorkflowStatus::Created => !self.prompt_pending,
            WorkflowStatus::AwaitingClarification => true,
            s => s.is_terminal() && self.closed,
        }
    }

    fn fail(&self, kind: &'static str, reason: &'static str) -> TransitionError {
        TransitionError::IllegalTransition { status: self.status, kind, reason }
    }

    fn executing(&self) -> bool {
        matches!(self.status, WorkflowStatus::Executing | WorkflowStatus::AwaitingApproval)
    }

    /// Validates every precondition before mutating, so a rejected event
    /// leaves the state untouched.
    pub fn apply(&mut self, event: &WorkflowEvent) -> Result<(), TransitionError> {
        let expected = self.last_seq + 1;
        if event.seq != expected {
            return Err(TransitionError::OutOfSequence { expected, found: event.seq });
        }
        let kind = event.body.kind();
        let ts = event.timestamp;
        match &event.body {
            EventBody::PromptReceived { .. } => {
                if !self.accepts_prompt() {
                    return Err(self.fail(kind, "workflow still active"));
                }
                if self.status.is_terminal() {
                    let workflows = self.workflows;
                    *self = WorkflowState { last_seq: self.last_seq, ..WorkflowState::default() };
                    self.workflows = workflows;
                }
                if self.status != WorkflowStatus::AwaitingClarification {
                    self.workflows += 1;
                }
                self.status = WorkflowStatus::Created;
                self.prompt_pending = true;
            }
            EventBody::IntentClassified { intent, .. } => {
                if self.status != WorkflowStatus::Created || !self.prompt_pending {
                    return Err(self.fail(kind, "no prompt awaiting classification"));
                }
                self.prompt_pending = false;
                self.status = match intent.class {
                    IntentClass::Task => WorkflowStatus::Planning,
                    IntentClass::Ambiguous => WorkflowStatus::AwaitingClarification,
                    IntentClass::Harmful => WorkflowStatus::Rejected,
                    IntentClass::CasualChat => WorkflowStatus::Complete,
                };
                if intent.class == IntentClass::Ambiguous {
                    self.clarifications += 1;
                } else {
                    self.clarifications = 0;
                }
            }
            EventBody::HandoffToPlanner { .. } => {
                if self.status != WorkflowStatus::Planning || self.handed_off {
                    return Err(self.fail(kind, "handoff outside planning or repeated"));
                }
                self.handed_off = true;
            }
            EventBody::HandoffRecorded { record, step_id, .. } => {
                if self.closed || matches!(self.status, WorkflowStatus::Created | WorkflowStatus::AwaitingClarification) {
                    return Err(self.fail(kind, "no open workflow"));
                }
                match (record.from_role, record.to_role) {
                    (_, Role::Planner) => {
                        if self.status != WorkflowStatus::Planning || !self.handed_off {
                            return Err(self.fail(kind, "planner handoff outside planning"));
                        }
                    }
                    (Role::Supervisor, Role::Agent) => {
                        let id = step_id.as_ref().ok_or_else(|| self.fail(kind, "dispatch handoff without step"))?;
                        let task = self.task_states.get_mut(id);
                        match task {
                            Some(t) if t.phase == TaskPhase::Dispatched => {
                                if record.accepted {
                                    t.phase = TaskPhase::Running;
                                }
                            }
                            _ => {
                                return Err(TransitionError::IllegalTransition {
                                    status: self.status,
                                    kind,
                                    reason: "dispatch handoff for a step that is not dispatched",
                                })
                            }
                        }
                    }
                    _ => {}
                }
            }
            EventBody::PlanProposed { plan, retry_limit, .. } => {
                if self.status != WorkflowStatus::Planning || !self.handed_off {
                    return Err(self.fail(kind, "plan without planner handoff"));
                }
                if plan.steps.is_empty() {
                    return Err(self.fail(kind, "empty plan"));
                }
                let tasks: BTreeMap<StepId, TaskStatus> =
                    plan.steps.iter().map(|s| (s.id.clone(), TaskStatus::pending())).collect();
                if tasks.len() != plan.steps.len() {
                    return Err(self.fail(kind, "duplicate step ids"));
                }
                self.task_states = tasks;
                self.plan = Some(plan.clone());
                self.retry_limit = *retry_limit;
                self.status = WorkflowStatus::Executing;
            }
            EventBody::TaskDispatched { step_id, attempt, .. } => {
                if !self.executing() {
                    return Err(self.fail(kind, "not executing"));
                }
                let task = self.task_states.get(step_id).ok_or_else(|| self.fail(kind, "unknown step"))?;
                if !matches!(task.phase, TaskPhase::Pending | TaskPhase::Retrying) {
                    return Err(self.fail(kind, "step not ready for dispatch"));
                }
                if *attempt != task.attempts + 1 || *attempt > self.retry_limit + 1 {
                    return Err(self.fail(kind, "attempt count out of bounds"));
                }
                if !self.dependencies_succeeded(step_id) {
                    return Err(self.fail(kind, "dependency not yet succeeded"));
                }
                let task = self.task_states.get_mut(step_id).expect("checked above");
                task.phase = TaskPhase::Dispatched;
                task.attempts = *attempt;
                task.last_heartbeat = None;
            }
            EventBody::Heartbeat { step_id, attempt } => {
                let executing = self.executing();
                let status = self.status;
                let task = self.task_states.get_mut(step_id);
                match task {
                    Some(t) if executing && matches!(t.phase, TaskPhase::Dispatched | TaskPhase::Running) && t.attempts == *attempt => {
                        t.phase = TaskPhase::Running;
                        t.last_heartbeat = Some(ts);
                    }
                    _ => return Err(TransitionError::IllegalTransition { status, kind, reason: "heartbeat for a task that is not running" }),
                }
            }
            EventBody::TaskRetried { step_id, attempt, .. } => {
                if !self.executing() {
                    return Err(self.fail(kind, "not executing"));
                }
                let limit = self.retry_limit;
                let task = self.task_states.get(step_id).ok_or_else(|| self.fail(kind, "unknown step"))?;
                if !matches!(task.phase, TaskPhase::Dispatched | TaskPhase::Running | TaskPhase::Stalled)
                    || task.attempts != *attempt
                    || task.attempts > limit
                {
                    return Err(self.fail(kind, "retry not permitted"));
                }
                if self.pending_approvals.contains_key(step_id) {
                    return Err(self.fail(kind, "retry while awaiting approval"));
                }
                self.task_states.get_mut(step_id).expect("checked").phase = TaskPhase::Retrying;
            }
            EventBody::TaskSucceeded { step_id, attempts, .. } => {
                if !self.executing() {
                    return Err(self.fail(kind, "not executing"));
                }
                let task = self.task_states.get(step_id).ok_or_else(|| self.fail(kind, "unknown step"))?;
                if !matches!(task.phase, TaskPhase::Dispatched | TaskPhase::Running) || task.attempts != *attempts {
                    return Err(self.fail(kind, "step not running"));
                }
                if self.pending_approvals.contains_key(step_id) {
                    return Err(self.fail(kind, "success while awaiting approval"));
                }
                self.task_states.get_mut(step_id).expect("checked").phase = TaskPhase::Succeeded;
                self.maybe_report();
            }
            EventBody::TaskFailed { step_id, attempts, .. } => {
                if !self.executing() {
                    return Err(self.fail(kind, "not executing"));
                }
                let task = self.task_states.get(step_id).ok_or_else(|| self.fail(kind, "unknown step"))?;
                let ok = match task.phase {
                    TaskPhase::Pending => task.attempts == 0 && *attempts == 0,
                    TaskPhase::Dispatched | TaskPhase::Running | TaskPhase::Stalled => task.attempts == *attempts,
                    _ => false,
                };
                if !ok {
                    return Err(self.fail(kind, "step cannot fail from its phase"));
                }
                self.task_states.get_mut(step_id).expect("checked").phase = TaskPhase::Failed;
                self.pending_approvals.remove(step_id);
                let descendants = self.plan.as_ref().map(|p| p.descendants(step_id)).unwrap_or_default();
                for d in descendants {
                    if let Some(t) = self.task_states.get_mut(&d) {
                        if t.phase == TaskPhase::Pending {
                            t.phase = TaskPhase::Skipped;
                        }
                    }
                }
                if self.pending_approvals.is_empty() && self.status == WorkflowStatus::AwaitingApproval {
                    self.status = WorkflowStatus::Executing;
                }
                self.maybe_report();
            }
            EventBody::ApprovalRequested { step_id, action_digest, .. } => {
                if !self.executing() {
                    return Err(self.fail(kind, "not executing"));
                }
                let task = self.task_states.get(step_id).ok_or_else(|| self.fail(kind, "unknown step"))?;
                if task.phase != TaskPhase::Running || self.pending_approvals.contains_key(step_id) {
                    return Err(self.fail(kind, "approval requested by a step that is not running"));
                }
                self.pending_approvals.insert(step_id.clone(), action_digest.clone());
                self.status = WorkflowStatus::AwaitingApproval;
            }
            EventBody::ApprovalResolved { step_id, action_digest, .. } => {
                if self.status != WorkflowStatus::AwaitingApproval {
                    return Err(self.fail(kind, "no approval pending"));
                }
                if self.pending_approvals.get(step_id) != Some(action_digest) {
                    return Err(self.fail(kind, "no matching approval request"));
                }
                self.pending_approvals.remove(step_id);
                if self.pending_approvals.is_empty() {
                    self.status = WorkflowStatus::Executing;
                }
            }
            EventBody::ReportReady { .. } => {
                if self.status != WorkflowStatus::Reporting {
                    return Err(self.fail(kind, "report outside reporting"));
                }
            }
            EventBody::WorkflowClosed { reason } => {
                if self.closed || (self.status == WorkflowStatus::Created && !self.prompt_pending) {
                    return Err(self.fail(kind, "no open workflow"));
                }
                let next = match reason {
                    CloseReason::Completed => match self.status {
                        WorkflowStatus::Reporting => self.final_status(),
                        WorkflowStatus::Complete => WorkflowStatus::Complete,
                        _ => return Err(self.fail(kind, "completion before reporting")),
                    },
                    CloseReason::Rejected => match self.status {
                        WorkflowStatus::Rejected => WorkflowStatus::Rejected,
                        _ => return Err(self.fail(kind, "rejection of a non-rejected request")),
                    },
                    CloseReason::Failed { .. } | CloseReason::Cancelled => {
                        if self.status.is_terminal() {
                            return Err(self.fail(kind, "workflow already finished"));
                        }
                        WorkflowStatus::Failed
                    }
                };
                self.status = next;
                self.prompt_pending = false;
                self.pending_approvals.clear();
                self.closed = true;
            }
        }
        self.last_seq = event.seq;
        Ok(())
    }

    fn dependencies_succeeded(&self, id: &StepId) -> bool {
        let Some(step) = self.plan.as_ref().and_then(|p| p.step(id)) else {
            return false;
        };
        step.depends_on
            .iter()
            .all(|d| self.task_states.get(d).map(|t| t.phase == TaskPhase::Succeeded).unwrap_or(false))
    }

    fn maybe_report(&mut self) {
        if self.status == WorkflowStatus::Executing && self.task_states.values().all(|t| t.phase.is_terminal()) {
            self.status = WorkflowStatus::Reporting;
        }
    }

    fn final_status(&self) -> WorkflowStatus {
        let succeeded = self.task_states.values().filter(|t| t.phase == TaskPhase::Succeeded).count();
        let failed = self.task_states.values().filter(|t| t.phase == TaskPhase::Failed).count();
        if succeeded == self.task_states.len() {
            WorkflowStatus::Complete
        } else if succeeded > 0 && failed > 0 {
            WorkflowStatus::PartialFailure
        } else {
            WorkflowStatus::Failed
        }
    }

    /// Checks the structural invariants every reachable state must satisfy.
    pub fn check_invariants(&self) -> Result<(), &'static str> {
        let tasks = || self.task_states.values();
        if self.status == WorkflowStatus::Complete && !tasks().all(|t| t.phase == TaskPhase::Succeeded) {
            return Err("Complete with a task that did not succeed");
        }
        if self.status == WorkflowStatus::PartialFailure
            && !(tasks().any(|t| t.phase == TaskPhase::Succeeded) && tasks().any(|t| t.phase == TaskPhase::Failed))
        {
            return Err("PartialFailure without both a success and a failure");
        }
        if tasks().any(|t| t.attempts > self.retry_limit + 1) {
            return Err("attempts exceed retry limit");
        }
        if let Some(plan) = &self.plan {
            for (id, t) in &self.task_states {
                if t.phase == TaskPhase::Skipped {
                    let has_failed_ancestor = plan
                        .steps
                        .iter()
                        .filter(|s| self.task_states.get(&s.id).map(|x| x.phase == TaskPhase::Failed).unwrap_or(false))
                        .any(|s| plan.descendants(&s.id).contains(id));
                    if !has_failed_ancestor {
                        return Err("Skipped without a failed ancestor");
                    }
                }
                if matches!(t.phase, TaskPhase::Dispatched | TaskPhase::Running | TaskPhase::Succeeded)
                    && !self.dependencies_succeeded(id)
                {
                    return Err("task started before its dependencies succeeded");
                }
            }
        }
        if (self.status == WorkflowStatus::AwaitingApproval) == self.pending_approvals.is_empty() {
            return Err("approval status out of sync with pending approvals");
        }
        Ok(())
    }

    /// Steps in the given phase, in plan order.
    pub fn steps_in(&self, phase: TaskPhase) -> Vec<StepId> {
        let Some(plan) = &self.plan else { return Vec::new() };
        plan.steps
            .iter()
            .filter(|s| self.task_states.get(&s.id).map(|t| t.phase == phase).unwrap_or(false))
            .map(|s| s.id.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{FailureCause, HandoffRecord, Intent};
    use crate::message::{Lang, Message};
    use crate::plan::PlanStep;
    use alloc::string::String;
    use alloc::vec;

    struct Log {
        events: Vec<WorkflowEvent>,
    }

    impl Log {
        fn new() -> Self {
            Log { events: Vec::new() }
        }
        fn push(&mut self, body: EventBody) -> &mut Self {
            let seq = self.events.len() as u64 + 1;
            self.events.push(WorkflowEvent::new(seq, seq * 10, body));
            self
        }
    }

    fn prompt() -> EventBody {
        EventBody::PromptReceived { message: Message::new("m1", Role::User, "do it", Lang::En, 0) }
    }

    fn intent(class: IntentClass) -> EventBody {
        EventBody::IntentClassified { intent: Intent { class, confidence: 1.0, cues: vec![] }, reply: None }
    }

    fn record(from: Role, to: Role, accepted: bool) -> HandoffRecord {
        HandoffRecord { from_role: from, to_role: to, payload_digest: String::new(), accepted, timestamp: 0 }
    }

    fn planned(steps: Vec<PlanStep>) -> Log {
        let mut log = Log::new();
        log.push(prompt()).push(intent(IntentClass::Task)).push(EventBody::HandoffToPlanner { payload_digest: "d".into() });
        log.push(EventBody::PlanProposed {
            plan: Plan { thought: "t".into(), steps, created_by: String::new() },
            levels: vec![],
            retry_limit: 2,
        });
        log
    }

    fn dispatch(id: &str, attempt: u32) -> EventBody {
        EventBody::TaskDispatched { step_id: id.into(), agent_id: "a".into(), attempt, description: String::new() }
    }

    fn succeeded(id: &str, attempts: u32) -> EventBody {
        EventBody::TaskSucceeded {
            step_id: id.into(),
            agent_id: "a".into(),
            attempts,
            summary: String::new(),
            artifacts: vec![],
            duration_ms: 1,
        }
    }

    #[test]
    fn empty_log_replays_to_created() {
        assert_eq!(replay(&[]).unwrap().status, WorkflowStatus::Created);
    }

    #[test]
    fn task_intent_moves_to_planning() {
        let mut log = Log::new();
        log.push(prompt()).push(intent(IntentClass::Task));
        assert_eq!(replay(&log.events).unwrap().status, WorkflowStatus::Planning);
    }

    #[test]
    fn last_success_moves_to_reporting_then_complete() {
        let mut log = planned(vec![PlanStep::new("s1", "", "x", &[])]);
        log.push(dispatch("s1", 1)).push(succeeded("s1", 1));
        let state = replay(&log.events).unwrap();
        assert_eq!(state.status, WorkflowStatus::Reporting);

        let bad = WorkflowEvent::new(state.last_seq + 1, 0, dispatch("s1", 2));
        assert!(matches!(transition(&state, &bad), Err(TransitionError::IllegalTransition { .. })));

        log.push(EventBody::WorkflowClosed { reason: CloseReason::Completed });
        assert_eq!(replay(&log.events).unwrap().status, WorkflowStatus::Complete);
    }

    #[test]
    fn gap_is_reported() {
        let mut log = Log::new();
        log.push(prompt()).push(intent(IntentClass::Task)).push(EventBody::HandoffToPlanner { payload_digest: "d".into() });
        log.events.push(WorkflowEvent::new(5, 0, EventBody::HandoffToPlanner { payload_digest: "d".into() }));
        assert_eq!(replay(&log.events), Err(ReplayError::GapInSequence { index: 3, expected: 4, found: 5 }));
    }

    #[test]
    fn dispatch_before_dependency_is_illegal() {
        let mut log = planned(vec![PlanStep::new("a", "", "x", &[]), PlanStep::new("b", "", "x", &["a"])]);
        log.push(dispatch("b", 1));
        assert!(matches!(replay(&log.events), Err(ReplayError::IllegalTransition { index: 4, .. })));
    }

    #[test]
    fn failure_skips_descendants_and_closes_partial() {
        let mut log = planned(vec![
            PlanStep::new("a", "", "x", &[]),
            PlanStep::new("b", "", "x", &["a"]),
            PlanStep::new("c", "", "x", &["a"]),
            PlanStep::new("d", "", "x", &["b", "c"]),
        ]);
        log.push(dispatch("a", 1)).push(succeeded("a", 1));
        log.push(dispatch("b", 1)).push(dispatch("c", 1));
        log.push(EventBody::TaskFailed { step_id: "b".into(), agent_id: None, cause: FailureCause::Timeout, attempts: 1 });
        let mid = replay(&log.events).unwrap();
        assert_eq!(mid.task(&"d".into()).unwrap().phase, TaskPhase::Skipped);
        assert_eq!(mid.status, WorkflowStatus::Executing);
        log.push(succeeded("c", 1)).push(EventBody::WorkflowClosed { reason: CloseReason::Completed });
        let end = replay(&log.events).unwrap();
        assert_eq!(end.status, WorkflowStatus::PartialFailure);
        end.check_invariants().unwrap();
    }

    #[test]
    fn attempts_bounded_by_retry_limit() {
        let mut log = planned(vec![PlanStep::new("a", "", "x", &[])]);
        for attempt in 1..=3 {
            log.push(dispatch("a", attempt));
            if attempt < 3 {
                log.push(EventBody::TaskRetried { step_id: "a".into(), attempt, cause: FailureCause::Timeout, backoff_ms: 0 });
            }
        }
        let state = replay(&log.events).unwrap();
        let retry = WorkflowEvent::new(
            state.last_seq + 1,
            0,
            EventBody::TaskRetried { step_id: "a".into(), attempt: 3, cause: FailureCause::Timeout, backoff_ms: 0 },
        );
        assert!(transition(&state, &retry).is_err());
    }

    #[test]
    fn approval_round_trip() {
        let mut log = planned(vec![PlanStep::new("a", "", "x", &[])]);
        log.push(dispatch("a", 1));
        log.push(EventBody::HandoffRecorded { record: record(Role::Supervisor, Role::Agent, true), step_id: Some("a".into()), agent_id: None });
        log.push(EventBody::ApprovalRequested { step_id: "a".into(), action_digest: "x".into(), description: String::new() });
        assert_eq!(replay(&log.events).unwrap().status, WorkflowStatus::AwaitingApproval);
        log.push(EventBody::ApprovalResolved { step_id: "a".into(), action_digest: "x".into(), approved: true });
        let s = replay(&log.events).unwrap();
        assert_eq!(s.status, WorkflowStatus::Executing);
        assert_eq!(s.task(&"a".into()).unwrap().phase, TaskPhase::Running);
    }

    #[test]
    fn busy_conversation_rejects_second_prompt() {
        let mut log = Log::new();
        log.push(prompt()).push(intent(IntentClass::Task)).push(prompt());
        assert!(replay(&log.events).is_err());
    }

    #[test]
    fn casual_chat_then_next_prompt() {
        let mut log = Log::new();
        log.push(prompt()).push(intent(IntentClass::CasualChat)).push(EventBody::WorkflowClosed { reason: CloseReason::Completed });
        log.push(prompt()).push(intent(IntentClass::Harmful)).push(EventBody::WorkflowClosed { reason: CloseReason::Rejected });
        let s = replay(&log.events).unwrap();
        assert_eq!(s.status, WorkflowStatus::Rejected);
        assert_eq!(s.workflows, 2);
    }

    #[test]
    fn clarification_counter() {
        let mut log = Log::new();
        log.push(prompt()).push(intent(IntentClass::Ambiguous)).push(prompt()).push(intent(IntentClass::Ambiguous));
        let s = replay(&log.events).unwrap();
        assert_eq!(s.status, WorkflowStatus::AwaitingClarification);
        assert_eq!(s.clarifications, 2);
        assert_eq!(s.workflows, 1);
    }
}
