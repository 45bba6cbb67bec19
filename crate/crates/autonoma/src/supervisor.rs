//! Plan execution: level-ordered dispatch under global and per-agent
//! concurrency caps, acknowledgments, heartbeat monitoring, retries with
//! exponential backoff, approvals and cancellation.
//!
//! The supervisor loop is the only writer of workflow events while a plan
//! runs. Workers report back over a channel and the loop turns each report
//! into events.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use autonoma_core::canonical::digest_of;
use autonoma_core::select::select_agent;
use autonoma_core::{
    health_check, ArtifactRef, CloseReason, EventBody, ExecutionPolicy, FailureCause, HandoffRecord, Health, Lang,
    PlanStep, Role, StepId, TaskOutcome, TaskResult, ValidatedPlan,
};
use rand::Rng;
use thiserror::Error;
use tokio::sync::{mpsc, oneshot, watch};

use crate::agentkit::{
    invoke, AgentError, AgentOutput, AgentTask, ApprovalGate, ApprovalToken, ArtifactSink, HookPayload,
    HookRegistry, HookStage, InvokeEnv, Registry, Signal, StepInput, TokenStore,
};
use crate::journal::{Journal, JournalError};

/// Requests from outside the workflow while it runs.
#[derive(Debug)]
pub enum Control {
    ResolveApproval { action_digest: String, approved: bool, reply: oneshot::Sender<Result<(), ApprovalError>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ApprovalError {
    #[error("no approval is pending")]
    NoPendingApproval,
    #[error("action digest does not match the pending approval")]
    DigestMismatch,
}

/// A step that may be dispatched now.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadyTask {
    pub step_id: StepId,
    pub level: usize,
    /// Position in the plan.
    pub index: usize,
    pub attempt: u32,
}

/// Orders ready steps before dispatch. The default is FIFO by level, then
/// plan position.
pub trait DispatchStrategy: Send + Sync {
    fn order(&self, ready: &mut Vec<ReadyTask>);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LevelFifo;

impl DispatchStrategy for LevelFifo {
    fn order(&self, ready: &mut Vec<ReadyTask>) {
        ready.sort_by_key(|r| (r.level, r.index));
    }
}

pub struct SupervisorEnv {
    pub journal: Journal,
    pub registry: Arc<Registry>,
    pub hooks: Arc<HookRegistry>,
    pub policy: ExecutionPolicy,
    pub lang: Lang,
    pub artifacts: Option<Arc<dyn ArtifactSink>>,
    pub tokens: Arc<TokenStore>,
    pub cancel: watch::Receiver<bool>,
    pub controls: Option<mpsc::UnboundedReceiver<Control>>,
    pub strategy: Arc<dyn DispatchStrategy>,
}

impl SupervisorEnv {
    /// Environment with no hooks, artifacts, cancellation or controls.
    pub fn new(journal: Journal, registry: Arc<Registry>, policy: ExecutionPolicy) -> Self {
        let (_, cancel) = watch::channel(false);
        SupervisorEnv {
            journal,
            registry,
            hooks: Arc::new(HookRegistry::new()),
            policy,
            lang: Lang::En,
            artifacts: None,
            tokens: Arc::new(TokenStore::new()),
            cancel,
            controls: None,
            strategy: Arc::new(LevelFifo),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkflowOutcome {
    /// One result per step, in plan order.
    pub results: Vec<TaskResult>,
    pub cancelled: bool,
}

#[derive(Debug)]
enum WorkerMsg {
    Acked { idx: usize, attempt: u32, ok: bool },
    Heartbeat { idx: usize, attempt: u32 },
    Finished { idx: usize, attempt: u32, result: Result<AgentOutput, FailureCause> },
    Approval { idx: usize, attempt: u32, description: String, digest: String, reply: oneshot::Sender<Result<ApprovalToken, AgentError>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Waiting,
    Backoff { ready_at: u64 },
    Dispatched,
    Running,
    Done,
}

struct Slot {
    step: PlanStep,
    level: usize,
    phase: Phase,
    attempts: u32,
    agent_id: Option<String>,
    heartbeat_capable: bool,
    description: Option<String>,
    task_digest: String,
    first_dispatch_ms: Option<u64>,
    last_heartbeat: u64,
    cancel: Option<watch::Sender<bool>>,
    approval: Option<(String, oneshot::Sender<Result<ApprovalToken, AgentError>>)>,
    output: Option<StepInput>,
    result: Option<TaskResult>,
}

struct TaskGate {
    tx: mpsc::UnboundedSender<WorkerMsg>,
    idx: usize,
    attempt: u32,
}

#[async_trait]
impl ApprovalGate for TaskGate {
    async fn request(&self, _step_id: &StepId, description: &str, action_digest: &str) -> Result<ApprovalToken, AgentError> {
        let (reply, rx) = oneshot::channel();
        let msg = WorkerMsg::Approval {
            idx: self.idx,
            attempt: self.attempt,
            description: description.to_string(),
            digest: action_digest.to_string(),
            reply,
        };
        self.tx.send(msg).map_err(|_| AgentError::Cancelled)?;
        rx.await.unwrap_or(Err(AgentError::Cancelled))
    }
}

fn handoff(from: Role, to: Role, digest: String, accepted: bool, ts: u64) -> HandoffRecord {
    HandoffRecord { from_role: from, to_role: to, payload_digest: digest, accepted, timestamp: ts }
}

/// Runs a plan to completion. The journal must be in `Planning` with the
/// planner handoff recorded; this emits `PlanProposed` and the
/// planner→supervisor handoff, then executes every step.
pub async fn run_workflow(plan: &ValidatedPlan, env: SupervisorEnv) -> Result<WorkflowOutcome, JournalError> {
    let journal = env.journal.clone();
    let clock = journal.clock();
    journal.emit(EventBody::PlanProposed {
        plan: plan.plan().clone(),
        levels: plan.levels().to_vec(),
        retry_limit: env.policy.retry_limit,
    })?;
    let digest = digest_of(plan.plan()).expect("plans serialize");
    journal.emit(EventBody::HandoffRecorded {
        record: handoff(Role::Planner, Role::Supervisor, digest, true, clock.now_ms()),
        step_id: None,
        agent_id: None,
    })?;
    Supervisor::new(plan, env).run().await
}

struct Supervisor {
    env: SupervisorEnv,
    slots: Vec<Slot>,
    index: BTreeMap<StepId, usize>,
    tx: mpsc::UnboundedSender<WorkerMsg>,
    rx: mpsc::UnboundedReceiver<WorkerMsg>,
    conversation_id: String,
}

impl Supervisor {
    fn new(plan: &ValidatedPlan, env: SupervisorEnv) -> Self {
        let slots = plan
            .plan()
            .steps
            .iter()
            .map(|s| Slot {
                step: s.clone(),
                level: plan.level_of(&s.id).unwrap_or(0),
                phase: Phase::Waiting,
                attempts: 0,
                agent_id: None,
                heartbeat_capable: false,
                description: None,
                task_digest: String::new(),
                first_dispatch_ms: None,
                last_heartbeat: 0,
                cancel: None,
                approval: None,
                output: None,
                result: None,
            })
            .collect::<Vec<_>>();
        let index = slots.iter().enumerate().map(|(i, s)| (s.step.id.clone(), i)).collect();
        let (tx, rx) = mpsc::unbounded_channel();
        let conversation_id = env.journal.conversation_id();
        Supervisor { env, slots, index, tx, rx, conversation_id }
    }

    fn now(&self) -> u64 {
        self.env.journal.clock().now_ms()
    }

    fn emit(&self, body: EventBody) -> Result<(), JournalError> {
        self.env.journal.emit(body).map(|_| ())
    }

    async fn run(mut self) -> Result<WorkflowOutcome, JournalError> {
        let mut cancel = self.env.cancel.clone();
        let mut cancel_open = true;
        let mut controls = self.env.controls.take();
        loop {
            if *cancel.borrow() {
                return self.cancel_all();
            }
            self.dispatch_ready()?;
            if self.slots.iter().all(|s| s.phase == Phase::Done) {
                break;
            }
            let deadline = self.next_deadline();
            let clock = self.env.journal.clock();
            let sleep = async {
                match deadline {
                    Some(ms) => tokio::time::sleep_until(clock.instant_at(ms)).await,
                    None => std::future::pending::<()>().await,
                }
            };
            tokio::select! {
                biased;
                changed = cancel.changed(), if cancel_open => {
                    if changed.is_err() {
                        cancel_open = false;
                    }
                }
                ctrl = recv_opt(&mut controls) => match ctrl {
                    Some(c) => self.on_control(c)?,
                    None => controls = None,
                },
                msg = self.rx.recv() => {
                    if let Some(msg) = msg {
                        self.on_worker(msg)?;
                    }
                }
                _ = sleep => self.on_timer()?,
            }
        }
        let results = self.slots.iter_mut().map(|s| s.result.take().expect("finished steps carry results")).collect();
        Ok(WorkflowOutcome { results, cancelled: false })
    }

    fn cancel_all(&mut self) -> Result<WorkflowOutcome, JournalError> {
        for slot in &mut self.slots {
            if let Some(c) = slot.cancel.take() {
                let _ = c.send(true);
            }
            if let Some((_, reply)) = slot.approval.take() {
                let _ = reply.send(Err(AgentError::Cancelled));
            }
        }
        self.emit(EventBody::WorkflowClosed { reason: CloseReason::Cancelled })?;
        let results = self.slots.iter_mut().filter_map(|s| s.result.take()).collect();
        Ok(WorkflowOutcome { results, cancelled: true })
    }

    fn next_deadline(&self) -> Option<u64> {
        let threshold = self.env.policy.stall_threshold_ms();
        let now = self.now();
        self.slots
            .iter()
            .filter_map(|s| match s.phase {
                // An elapsed backoff is waiting on capacity, which frees up
                // through a worker message rather than the timer.
                Phase::Backoff { ready_at } if ready_at > now => Some(ready_at),
                Phase::Backoff { .. } => None,
                Phase::Running if s.heartbeat_capable && s.approval.is_none() => {
                    Some(s.last_heartbeat.saturating_add(threshold).saturating_add(1))
                }
                _ => None,
            })
            .min()
    }

    fn ready(&self, now: u64) -> Vec<ReadyTask> {
        let mut ready: Vec<ReadyTask> = self
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| match s.phase {
                Phase::Waiting => s.step.depends_on.iter().all(|d| {
                    self.index.get(d).map(|&i| matches!(&self.slots[i].result, Some(r) if r.succeeded())).unwrap_or(false)
                }),
                Phase::Backoff { ready_at } => ready_at <= now,
                _ => false,
            })
            .map(|(i, s)| ReadyTask { step_id: s.step.id.clone(), level: s.level, index: i, attempt: s.attempts + 1 })
            .collect();
        self.env.strategy.order(&mut ready);
        ready
    }

    fn in_flight(&self) -> (usize, BTreeMap<&str, usize>) {
        let mut per_agent: BTreeMap<&str, usize> = BTreeMap::new();
        let mut total = 0;
        for s in &self.slots {
            if matches!(s.phase, Phase::Dispatched | Phase::Running) {
                total += 1;
                if let Some(a) = &s.agent_id {
                    *per_agent.entry(a.as_str()).or_default() += 1;
                }
            }
        }
        (total, per_agent)
    }

    fn dispatch_ready(&mut self) -> Result<(), JournalError> {
        let now = self.now();
        for ready in self.ready(now) {
            let idx = ready.index;
            if self.slots[idx].phase == Phase::Done {
                continue;
            }
            if self.slots[idx].agent_id.is_none() && !self.prepare(idx)? {
                continue;
            }
            let (total, per_agent) = self.in_flight();
            if total >= self.env.policy.max_concurrency as usize {
                break;
            }
            let agent_id = self.slots[idx].agent_id.clone().expect("prepared");
            if per_agent.get(agent_id.as_str()).copied().unwrap_or(0) >= self.env.policy.per_agent_concurrency as usize {
                continue;
            }
            self.dispatch(idx)?;
        }
        Ok(())
    }

    fn base_task(&self, idx: usize, attempt: u32) -> AgentTask {
        let slot = &self.slots[idx];
        let inputs = slot
            .step
            .depends_on
            .iter()
            .filter_map(|d| self.index.get(d).and_then(|&i| self.slots[i].output.clone()))
            .collect();
        AgentTask {
            conversation_id: self.conversation_id.clone(),
            step_id: slot.step.id.clone(),
            description: slot.description.clone().unwrap_or_else(|| slot.step.description.clone()),
            attempt,
            lang: self.env.lang,
            inputs,
        }
    }

    /// Agent selection and the pre_task hook, once per step. Returns false
    /// when the step failed without dispatch.
    fn prepare(&mut self, idx: usize) -> Result<bool, JournalError> {
        let manifests = self.env.registry.manifests();
        let chosen = select_agent(&self.slots[idx].step, &manifests).map(|m| (m.id.clone(), m.heartbeat_capable));
        let (agent_id, heartbeat_capable) = match chosen {
            Ok(c) => c,
            Err(e) => {
                let cause = FailureCause::NoCapableAgent { capability: e.0.to_string() };
                self.finish_failed(idx, cause, false)?;
                return Ok(false);
            }
        };
        match self.env.hooks.run(HookStage::PreTask, HookPayload::Task(self.base_task(idx, 1))) {
            Ok(HookPayload::Task(t)) => self.slots[idx].description = Some(t.description),
            Ok(_) => {}
            Err(rej) => {
                let cause = FailureCause::HookRejected { hook_id: rej.hook_id, reason: rej.reason };
                self.finish_failed(idx, cause, false)?;
                return Ok(false);
            }
        }
        let slot = &mut self.slots[idx];
        slot.agent_id = Some(agent_id);
        slot.heartbeat_capable = heartbeat_capable;
        Ok(true)
    }

    fn dispatch(&mut self, idx: usize) -> Result<(), JournalError> {
        let now = self.now();
        let attempt = self.slots[idx].attempts + 1;
        let agent_id = self.slots[idx].agent_id.clone().expect("prepared");
        let Some(agent) = self.env.registry.get(&agent_id) else {
            let cause = FailureCause::NoCapableAgent { capability: self.slots[idx].step.required_capability.to_string() };
            return self.finish_failed(idx, cause, false);
        };
        let task = self.base_task(idx, attempt);
        self.emit(EventBody::TaskDispatched {
            step_id: task.step_id.clone(),
            agent_id: agent_id.clone(),
            attempt,
            description: task.description.clone(),
        })?;
        let (cancel_tx, cancel_rx) = watch::channel(false);
        let slot = &mut self.slots[idx];
        slot.attempts = attempt;
        slot.phase = Phase::Dispatched;
        slot.first_dispatch_ms.get_or_insert(now);
        slot.task_digest = digest_of(&task).expect("tasks serialize");
        slot.cancel = Some(cancel_tx);

        let tx = self.tx.clone();
        let ack_timeout = Duration::from_millis(self.env.policy.ack_timeout_ms);
        let env = InvokeEnv {
            signals: mpsc::unbounded_channel().0,
            cancel: cancel_rx,
            approvals: None,
            artifacts: self.env.artifacts.clone(),
            clock: self.env.journal.clock(),
            cancel_grace_ms: self.env.policy.heartbeat_interval_ms,
        };
        tokio::spawn(async move {
            let ok = matches!(tokio::time::timeout(ack_timeout, agent.acknowledge(&task)).await, Ok(Ok(())));
            let _ = tx.send(WorkerMsg::Acked { idx, attempt, ok });
            if !ok || *env.cancel.borrow() {
                return;
            }
            let (signals, mut signal_rx) = mpsc::unbounded_channel();
            let forward_tx = tx.clone();
            let forwarder = tokio::spawn(async move {
                while let Some(Signal::Heartbeat) = signal_rx.recv().await {
                    if forward_tx.send(WorkerMsg::Heartbeat { idx, attempt }).is_err() {
                        break;
                    }
                }
            });
            let gate: Arc<dyn ApprovalGate> = Arc::new(TaskGate { tx: tx.clone(), idx, attempt });
            let env = InvokeEnv { signals, approvals: Some(gate), ..env };
            let result = invoke(agent, task, env).await;
            forwarder.abort();
            let _ = tx.send(WorkerMsg::Finished { idx, attempt, result });
        });
        Ok(())
    }

    fn current(&self, idx: usize, attempt: u32) -> bool {
        self.slots.get(idx).map(|s| s.attempts == attempt && matches!(s.phase, Phase::Dispatched | Phase::Running)).unwrap_or(false)
    }

    fn on_worker(&mut self, msg: WorkerMsg) -> Result<(), JournalError> {
        let now = self.now();
        match msg {
            WorkerMsg::Acked { idx, attempt, ok } => {
                if !self.current(idx, attempt) || self.slots[idx].phase != Phase::Dispatched {
                    return Ok(());
                }
                let slot = &self.slots[idx];
                self.emit(EventBody::HandoffRecorded {
                    record: handoff(Role::Supervisor, Role::Agent, slot.task_digest.clone(), ok, now),
                    step_id: Some(slot.step.id.clone()),
                    agent_id: slot.agent_id.clone(),
                })?;
                if ok {
                    let slot = &mut self.slots[idx];
                    slot.phase = Phase::Running;
                    slot.last_heartbeat = now;
                } else {
                    self.fail_attempt(idx, FailureCause::AckTimeout)?;
                }
            }
            WorkerMsg::Heartbeat { idx, attempt } => {
                if self.current(idx, attempt) {
                    self.emit(EventBody::Heartbeat { step_id: self.slots[idx].step.id.clone(), attempt })?;
                    let slot = &mut self.slots[idx];
                    slot.phase = Phase::Running;
                    slot.last_heartbeat = now;
                }
            }
            WorkerMsg::Approval { idx, attempt, description, digest, reply } => {
                if !self.current(idx, attempt) || self.slots[idx].phase != Phase::Running || self.slots[idx].approval.is_some() {
                    let _ = reply.send(Err(AgentError::Cancelled));
                    return Ok(());
                }
                self.emit(EventBody::ApprovalRequested {
                    step_id: self.slots[idx].step.id.clone(),
                    action_digest: digest.clone(),
                    description,
                })?;
                self.slots[idx].approval = Some((digest, reply));
            }
            WorkerMsg::Finished { idx, attempt, result } => {
                if !self.current(idx, attempt) {
                    return Ok(());
                }
                if let Some((_, reply)) = self.slots[idx].approval.take() {
                    drop(reply);
                    let cause = result.err().unwrap_or(FailureCause::ApprovalDenied);
                    return self.finish_failed(idx, cause, true);
                }
                match result {
                    Ok(output) => self.succeed(idx, output)?,
                    Err(cause) => self.fail_attempt(idx, cause)?,
                }
            }
        }
        Ok(())
    }

    fn on_control(&mut self, control: Control) -> Result<(), JournalError> {
        match control {
            Control::ResolveApproval { action_digest, approved, reply } => {
                let pending: Vec<usize> = (0..self.slots.len()).filter(|&i| self.slots[i].approval.is_some()).collect();
                let Some(&idx) = pending.iter().find(|&&i| self.slots[i].approval.as_ref().map(|a| a.0 == action_digest).unwrap_or(false)) else {
                    let err = if pending.is_empty() { ApprovalError::NoPendingApproval } else { ApprovalError::DigestMismatch };
                    let _ = reply.send(Err(err));
                    return Ok(());
                };
                self.emit(EventBody::ApprovalResolved {
                    step_id: self.slots[idx].step.id.clone(),
                    action_digest: action_digest.clone(),
                    approved,
                })?;
                let now = self.now();
                let (_, agent_reply) = self.slots[idx].approval.take().expect("pending");
                self.slots[idx].last_heartbeat = now;
                let decision = if approved {
                    Ok(self.env.tokens.issue(&self.conversation_id, &action_digest, now))
                } else {
                    Err(AgentError::ApprovalDenied)
                };
                let _ = agent_reply.send(decision);
                let _ = reply.send(Ok(()));
            }
        }
        Ok(())
    }

    fn on_timer(&mut self) -> Result<(), JournalError> {
        let now = self.now();
        let stalled: Vec<usize> = (0..self.slots.len())
            .filter(|&i| {
                let s = &self.slots[i];
                s.phase == Phase::Running
                    && s.heartbeat_capable
                    && s.approval.is_none()
                    && health_check(s.last_heartbeat, now, &self.env.policy) == Health::Stalled
            })
            .collect();
        for idx in stalled {
            tracing::debug!(step = %self.slots[idx].step.id, "task stalled");
            self.fail_attempt(idx, FailureCause::Stalled)?;
        }
        Ok(())
    }

    fn succeed(&mut self, idx: usize, output: AgentOutput) -> Result<(), JournalError> {
        let now = self.now();
        let slot = &self.slots[idx];
        let agent_id = slot.agent_id.clone().expect("dispatched");
        let duration_ms = now.saturating_sub(slot.first_dispatch_ms.unwrap_or(now));
        let result = TaskResult {
            step_id: slot.step.id.clone(),
            outcome: TaskOutcome::Succeeded { artifacts: output.artifacts, summary: output.summary },
            duration_ms,
            agent_id: Some(agent_id.clone()),
        };
        let result = match self.env.hooks.run(HookStage::PostTask, HookPayload::Result(result.clone())) {
            Ok(HookPayload::Result(r)) if r.step_id == result.step_id && r.succeeded() => r,
            Ok(_) => result,
            Err(rej) => {
                let cause = FailureCause::HookRejected { hook_id: rej.hook_id, reason: rej.reason };
                return self.finish_failed(idx, cause, true);
            }
        };
        let TaskOutcome::Succeeded { artifacts, summary } = result.outcome.clone() else { unreachable!() };
        let digest = digest_of(&result.outcome).expect("outcomes serialize");
        self.emit(EventBody::HandoffRecorded {
            record: handoff(Role::Agent, Role::Supervisor, digest, true, now),
            step_id: Some(result.step_id.clone()),
            agent_id: Some(agent_id.clone()),
        })?;
        self.emit(EventBody::TaskSucceeded {
            step_id: result.step_id.clone(),
            agent_id,
            attempts: self.slots[idx].attempts,
            summary: summary.clone(),
            artifacts: artifacts.clone(),
            duration_ms,
        })?;
        let slot = &mut self.slots[idx];
        slot.phase = Phase::Done;
        slot.cancel = None;
        slot.output = Some(StepInput { step_id: result.step_id.clone(), summary, artifacts });
        slot.result = Some(result);
        Ok(())
    }

    /// A failed attempt: retry after backoff while attempts remain and the
    /// cause is retryable, otherwise fail the step.
    fn fail_attempt(&mut self, idx: usize, cause: FailureCause) -> Result<(), JournalError> {
        if let Some(c) = self.slots[idx].cancel.take() {
            let _ = c.send(true);
        }
        let attempts = self.slots[idx].attempts;
        if cause.is_terminal() || attempts >= self.env.policy.max_attempts() {
            return self.finish_failed(idx, cause, true);
        }
        let mut backoff_ms = self.env.policy.backoff.delay_ms(attempts);
        if self.env.policy.backoff.jitter && backoff_ms > 1 {
            backoff_ms += rand::rng().random_range(0..backoff_ms / 2);
        }
        self.emit(EventBody::TaskRetried { step_id: self.slots[idx].step.id.clone(), attempt: attempts, cause, backoff_ms })?;
        self.slots[idx].phase = Phase::Backoff { ready_at: self.now() + backoff_ms };
        Ok(())
    }

    /// Terminal failure; pending descendants become skipped.
    fn finish_failed(&mut self, idx: usize, cause: FailureCause, dispatched: bool) -> Result<(), JournalError> {
        let now = self.now();
        if let Some(c) = self.slots[idx].cancel.take() {
            let _ = c.send(true);
        }
        let slot = &self.slots[idx];
        let step_id = slot.step.id.clone();
        let attempts = if dispatched { slot.attempts } else { 0 };
        let agent_id = if dispatched { slot.agent_id.clone() } else { None };
        if dispatched {
            let digest = digest_of(&cause).expect("causes serialize");
            self.emit(EventBody::HandoffRecorded {
                record: handoff(Role::Agent, Role::Supervisor, digest, cause.result_delivered(), now),
                step_id: Some(step_id.clone()),
                agent_id: agent_id.clone(),
            })?;
        }
        self.emit(EventBody::TaskFailed { step_id: step_id.clone(), agent_id: agent_id.clone(), cause: cause.clone(), attempts })?;
        let duration_ms = now.saturating_sub(slot.first_dispatch_ms.unwrap_or(now));
        let slot = &mut self.slots[idx];
        slot.phase = Phase::Done;
        slot.result = Some(TaskResult { step_id: step_id.clone(), outcome: TaskOutcome::Failed { cause, attempts }, duration_ms, agent_id });

        let plan_steps: Vec<PlanStep> = self.slots.iter().map(|s| s.step.clone()).collect();
        let plan = autonoma_core::Plan { thought: String::new(), steps: plan_steps, created_by: String::new() };
        for d in plan.descendants(&step_id) {
            let di = self.index[&d];
            let slot = &mut self.slots[di];
            if slot.phase == Phase::Waiting {
                slot.phase = Phase::Done;
                slot.result = Some(TaskResult {
                    step_id: d.clone(),
                    outcome: TaskOutcome::Skipped { blocked_by: step_id.clone() },
                    duration_ms: 0,
                    agent_id: None,
                });
            }
        }
        Ok(())
    }
}

async fn recv_opt(rx: &mut Option<mpsc::UnboundedReceiver<Control>>) -> Option<Control> {
    match rx {
        Some(r) => r.recv().await,
        None => std::future::pending().await,
    }
}

/// Artifacts a finished workflow produced, in plan order.
pub fn collect_artifacts(results: &[TaskResult]) -> Vec<ArtifactRef> {
    results
        .iter()
        .filter_map(|r| match &r.outcome {
            TaskOutcome::Succeeded { artifacts, .. } => Some(artifacts.clone()),
            _ => None,
        })
        .flatten()
        .collect()
}
