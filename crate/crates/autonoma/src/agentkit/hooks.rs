//! Interceptors at fixed workflow stages. Hooks at one stage run in
//! registration order.

use std::sync::{Arc, RwLock};

use autonoma_core::event::TaskResult;
use autonoma_core::report::Report;
use autonoma_core::Plan;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::agent::AgentTask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HookStage {
    PrePlan,
    PostPlan,
    PreTask,
    PostTask,
    PreReport,
    PostReport,
}

impl HookStage {
    pub const ALL: [HookStage; 6] = [
        HookStage::PrePlan,
        HookStage::PostPlan,
        HookStage::PreTask,
        HookStage::PostTask,
        HookStage::PreReport,
        HookStage::PostReport,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HookStage::PrePlan => "pre_plan",
            HookStage::PostPlan => "post_plan",
            HookStage::PreTask => "pre_task",
            HookStage::PostTask => "post_task",
            HookStage::PreReport => "pre_report",
            HookStage::PostReport => "post_report",
        }
    }
}

/// What a stage hands its hooks.
#[derive(Debug, Clone, PartialEq)]
pub enum HookPayload {
    /// pre_plan: the request text going to the planner.
    Request(String),
    /// post_plan
    Plan(Plan),
    /// pre_task
    Task(AgentTask),
    /// post_task
    Result(TaskResult),
    /// pre_report
    Results(Vec<TaskResult>),
    /// post_report
    Report(Report),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("hook `{hook_id}` rejected at {stage}: {reason}")]
pub struct HookRejection {
    pub hook_id: String,
    pub stage: &'static str,
    pub reason: String,
}

type TransformFn = dyn Fn(HookPayload) -> HookPayload + Send + Sync;
type ValidateFn = dyn Fn(&HookPayload) -> Result<(), String> + Send + Sync;
type NotifyFn = dyn Fn(&HookPayload) + Send + Sync;

#[derive(Clone)]
enum Action {
    Transform(Arc<TransformFn>),
    Validate(Arc<ValidateFn>),
    Notify(Arc<NotifyFn>),
}

#[derive(Clone)]
pub struct Hook {
    pub id: String,
    pub stage: HookStage,
    action: Action,
}

impl std::fmt::Debug for Hook {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.action {
            Action::Transform(_) => "transform",
            Action::Validate(_) => "validate",
            Action::Notify(_) => "notify",
        };
        f.debug_struct("Hook").field("id", &self.id).field("stage", &self.stage).field("kind", &kind).finish()
    }
}

impl Hook {
    pub fn transform(
        stage: HookStage,
        id: impl Into<String>,
        f: impl Fn(HookPayload) -> HookPayload + Send + Sync + 'static,
    ) -> Self {
        Hook { id: id.into(), stage, action: Action::Transform(Arc::new(f)) }
    }

    pub fn validate(
        stage: HookStage,
        id: impl Into<String>,
        f: impl Fn(&HookPayload) -> Result<(), String> + Send + Sync + 'static,
    ) -> Self {
        Hook { id: id.into(), stage, action: Action::Validate(Arc::new(f)) }
    }

    pub fn notify(stage: HookStage, id: impl Into<String>, f: impl Fn(&HookPayload) + Send + Sync + 'static) -> Self {
        Hook { id: id.into(), stage, action: Action::Notify(Arc::new(f)) }
    }
}

#[derive(Default)]
pub struct HookRegistry {
    hooks: RwLock<Vec<Hook>>,
}

impl HookRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn install(&self, hook: Hook) -> String {
        let id = hook.id.clone();
        self.hooks.write().expect("hook lock").push(hook);
        id
    }

    pub fn is_empty(&self, stage: HookStage) -> bool {
        !self.hooks.read().expect("hook lock").iter().any(|h| h.stage == stage)
    }

    /// Runs every hook at `stage` in order. A transform that changes the
    /// payload variant is ignored.
    pub fn run(&self, stage: HookStage, mut payload: HookPayload) -> Result<HookPayload, HookRejection> {
        let hooks: Vec<Hook> =
            self.hooks.read().expect("hook lock").iter().filter(|h| h.stage == stage).cloned().collect();
        for hook in hooks {
            match &hook.action {
                Action::Transform(f) => {
                    let next = f(payload.clone());
                    if std::mem::discriminant(&next) == std::mem::discriminant(&payload) {
                        payload = next;
                    } else {
                        tracing::warn!(hook = %hook.id, "transform hook changed payload kind; ignored");
                    }
                }
                Action::Validate(f) => {
                    if let Err(reason) = f(&payload) {
                        return Err(HookRejection { hook_id: hook.id.clone(), stage: stage.as_str(), reason });
                    }
                }
                Action::Notify(f) => f(&payload),
            }
        }
        Ok(payload)
    }
}
