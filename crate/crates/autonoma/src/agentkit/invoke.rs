use std::sync::{Arc, Mutex};
use std::time::Duration;

use autonoma_core::FailureCause;
use tokio::sync::{mpsc, watch};
use tokio::time::Instant;

use super::agent::{Agent, AgentContext, AgentOutput, AgentTask, ApprovalGate, ArtifactSink};
use crate::clock::RuntimeClock;

/// Messages from a running agent to its supervisor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Heartbeat,
}

/// Time spent waiting on humans, excluded from the runtime budget.
#[derive(Debug, Default)]
pub struct PauseBudget {
    state: Mutex<PauseState>,
}

#[derive(Debug, Default)]
struct PauseState {
    total_ms: u64,
    open: u32,
    since_ms: u64,
}

pub struct PauseGuard<'a> {
    budget: &'a PauseBudget,
    clock: RuntimeClock,
}

impl PauseBudget {
    pub fn begin(&self, clock: &RuntimeClock) -> PauseGuard<'_> {
        let mut s = self.state.lock().expect("pause lock");
        if s.open == 0 {
            s.since_ms = clock.now_ms();
        }
        s.open += 1;
        PauseGuard { budget: self, clock: *clock }
    }

    /// Total paused time up to `now_ms`, including an ongoing pause.
    pub fn total_ms(&self, now_ms: u64) -> u64 {
        let s = self.state.lock().expect("pause lock");
        s.total_ms + if s.open > 0 { now_ms.saturating_sub(s.since_ms) } else { 0 }
    }

    pub fn is_paused(&self) -> bool {
        self.state.lock().expect("pause lock").open > 0
    }
}

impl Drop for PauseGuard<'_> {
    fn drop(&mut self) {
        let mut s = self.budget.state.lock().expect("pause lock");
        s.open -= 1;
        if s.open == 0 {
            s.total_ms += self.clock.now_ms().saturating_sub(s.since_ms);
        }
    }
}

/// Channels and services for one invocation.
#[derive(Clone)]
pub struct InvokeEnv {
    pub signals: mpsc::UnboundedSender<Signal>,
    pub cancel: watch::Receiver<bool>,
    pub approvals: Option<Arc<dyn ApprovalGate>>,
    pub artifacts: Option<Arc<dyn ArtifactSink>>,
    pub clock: RuntimeClock,
    /// How long a cancelled agent may take to stop before it is abandoned.
    pub cancel_grace_ms: u64,
}

/// Runs one task under the agent's own grants: runtime bounded by
/// `max_runtime_ms` (approval waits excluded), panics contained, summary
/// truncated to `max_output_bytes`.
pub async fn invoke(agent: Arc<dyn Agent>, task: AgentTask, env: InvokeEnv) -> Result<AgentOutput, FailureCause> {
    let grants = agent.manifest().grants.clone();
    let max_runtime = grants.max_runtime_ms;
    let max_output = grants.max_output_bytes as usize;
    let pause = Arc::new(PauseBudget::default());
    let ctx = AgentContext::new(
        grants,
        env.signals.clone(),
        env.cancel.clone(),
        env.approvals.clone(),
        env.artifacts.clone(),
        pause.clone(),
        env.clock,
    );

    let start = env.clock.now_ms();
    let runner = agent.clone();
    let mut handle = tokio::spawn(async move { runner.run(task, ctx).await });
    let mut cancel = env.cancel.clone();

    loop {
        let now = env.clock.now_ms();
        let deadline_ms = start + max_runtime + pause.total_ms(now);
        let sleep_for = deadline_ms.saturating_sub(now);
        tokio::select! {
            biased;
            joined = &mut handle => {
                return match joined {
                    Ok(Ok(mut out)) => {
                        truncate_utf8(&mut out.summary, max_output);
                        Ok(out)
                    }
                    Ok(Err(e)) => Err(e.into_cause()),
                    Err(e) if e.is_panic() => Err(FailureCause::AgentPanic { message: panic_message(e.into_panic()) }),
                    Err(_) => Err(FailureCause::Cancelled),
                };
            }
            changed = cancel.changed() => {
                if changed.is_ok() && !*cancel.borrow() {
                    continue;
                }
                // Cooperative stop, then abandonment.
                let grace = Duration::from_millis(env.cancel_grace_ms);
                if tokio::time::timeout(grace, &mut handle).await.is_err() {
                    handle.abort();
                }
                return Err(FailureCause::Cancelled);
            }
            _ = tokio::time::sleep_until(Instant::now() + Duration::from_millis(sleep_for)) => {
                let now = env.clock.now_ms();
                if pause.is_paused() || now < start + max_runtime + pause.total_ms(now) {
                    continue;
                }
                handle.abort();
                return Err(FailureCause::Timeout);
            }
        }
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "agent panicked".into()
    }
}

pub(crate) fn truncate_utf8(s: &mut String, max: usize) {
    if s.len() <= max {
        return;
    }
    let mut cut = max;
    while !s.is_char_boundary(cut) {
        cut -= 1;
    }
    s.truncate(cut);
}
