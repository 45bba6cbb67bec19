//! Final report assembly from task results.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::event::{FailureCause, TaskOutcome, TaskResult};
use crate::message::Lang;
use crate::plan::{Plan, StepId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureEntry {
    pub step_id: StepId,
    pub cause: String,
    pub recommendation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub lang: Lang,
    pub executive_summary: String,
    pub key_findings: Vec<String>,
    pub detailed_analysis: String,
    pub conclusions_and_recommendations: String,
    pub sources: Vec<String>,
    pub failure_log: Vec<FailureEntry>,
}

/// Cause → advice lookup. Skipped steps point at the step that blocked them.
pub fn recommendation(outcome: &TaskOutcome, lang: Lang) -> String {
    let ar = lang == Lang::Ar;
    match outcome {
        TaskOutcome::Succeeded { .. } => String::new(),
        TaskOutcome::Skipped { blocked_by } => {
            if ar {
                format!("عالج فشل الخطوة {blocked_by} ثم أعد تشغيل سير العمل")
            } else {
                format!("resolve the failure of step {blocked_by}, then re-run the workflow")
            }
        }
        TaskOutcome::Failed { cause, .. } => advice_for(cause, ar).to_string(),
    }
}

fn advice_for(cause: &FailureCause, ar: bool) -> &'static str {
    match (cause, ar) {
        (FailureCause::Timeout, false) => "raise max_runtime_ms for the agent or split the step",
        (FailureCause::Timeout, true) => "ارفع قيمة max_runtime_ms للوكيل أو قسّم الخطوة",
        (FailureCause::Stalled, false) => "check that the agent emits heartbeats; raise heartbeat_interval_ms if it is busy",
        (FailureCause::Stalled, true) => "تحقق من أن الوكيل يرسل نبضات؛ ارفع heartbeat_interval_ms إذا كان مشغولاً",
        (FailureCause::AckTimeout, false) => "check that the agent is running; raise ack_timeout_ms",
        (FailureCause::AckTimeout, true) => "تحقق من تشغيل الوكيل؛ ارفع ack_timeout_ms",
        (FailureCause::PrivilegeViolation { .. }, false) => "adjust the agent's grants or keep paths inside the jail",
        (FailureCause::PrivilegeViolation { .. }, true) => "عدّل صلاحيات الوكيل أو أبقِ المسارات داخل مجلد العزل",
        (FailureCause::PlanParse { .. }, false) => "inspect the raw model output at the reported path",
        (FailureCause::PlanParse { .. }, true) => "افحص مخرجات النموذج الخام عند المسار المذكور",
        (FailureCause::ApprovalDenied, false) => "re-run and approve the destructive action, or change the request",
        (FailureCause::ApprovalDenied, true) => "أعد التشغيل ووافق على الإجراء أو عدّل الطلب",
        (FailureCause::NoCapableAgent { .. }, false) => "register an agent declaring the required capability",
        (FailureCause::NoCapableAgent { .. }, true) => "سجّل وكيلاً يعلن القدرة المطلوبة",
        (FailureCause::HookRejected { .. }, false) => "review the rejecting hook's rule or adjust the input",
        (FailureCause::HookRejected { .. }, true) => "راجع قاعدة الخطاف الرافض أو عدّل المدخلات",
        (FailureCause::ProviderUnavailable { .. }, false) => "check the model backend configuration and connectivity",
        (FailureCause::ProviderUnavailable { .. }, true) => "تحقق من إعدادات خادم النموذج والاتصال به",
        (FailureCause::Cancelled, false) => "re-submit the request when ready",
        (FailureCause::Cancelled, true) => "أعد إرسال الطلب عند الجاهزية",
        (FailureCause::AgentPanic { .. } | FailureCause::AgentError { .. }, false) => "inspect the agent's logs and input for this step",
        (FailureCause::AgentPanic { .. } | FailureCause::AgentError { .. }, true) => "افحص سجلات الوكيل ومدخلات هذه الخطوة",
    }
}

/// Optional provider-drafted narrative that replaces the template summary.
#[derive(Debug, Clone, Default)]
pub struct Narrative {
    pub executive_summary: Option<String>,
}

/// Template assembly. Results are matched to plan steps by id; a step
/// without a result is reported as skipped by its first failed dependency.
pub fn assemble_report(plan: &Plan, results: &[TaskResult], lang: Lang, narrative: &Narrative) -> Report {
    let ar = lang == Lang::Ar;
    let mut key_findings = Vec::new();
    let mut sources = Vec::new();
    let mut failure_log = Vec::new();
    let mut analysis = String::new();

    for step in &plan.steps {
        let Some(result) = results.iter().find(|r| r.step_id == step.id) else {
            continue;
        };
        match &result.outcome {
            TaskOutcome::Succeeded { artifacts, summary } => {
                key_findings.push(format!("[{}] {}", step.id, summary));
                for a in artifacts {
                    if !sources.contains(&a.0) {
                        sources.push(a.0.clone());
                    }
                }
                for line in summary.lines() {
                    if let Some(src) = line.split("source: ").nth(1) {
                        let src = src.trim_end_matches(')').trim().to_string();
                        if !src.is_empty() && !sources.contains(&src) {
                            sources.push(src);
                        }
                    }
                }
            }
            TaskOutcome::Failed { cause, .. } => failure_log.push(FailureEntry {
                step_id: step.id.clone(),
                cause: cause.to_string(),
                recommendation: recommendation(&result.outcome, lang),
            }),
            TaskOutcome::Skipped { blocked_by } => failure_log.push(FailureEntry {
                step_id: step.id.clone(),
                cause: format!("skipped: dependency {blocked_by} failed"),
                recommendation: recommendation(&result.outcome, lang),
            }),
        }
        let agent = result.agent_id.as_deref().unwrap_or("-");
        let status = match &result.outcome {
            TaskOutcome::Succeeded { .. } => {
                if ar { "نجحت" } else { "succeeded" }
            }
            TaskOutcome::Failed { .. } => {
                if ar { "فشلت" } else { "failed" }
            }
            TaskOutcome::Skipped { .. } => {
                if ar { "تم تخطيها" } else { "skipped" }
            }
        };
        if ar {
            analysis.push_str(&format!(
                "الخطوة {} ({}) عبر {}: {} خلال {} مللي ثانية.\n",
                step.id, step.description, agent, status, result.duration_ms
            ));
        } else {
            analysis.push_str(&format!(
                "Step {} ({}) via {}: {} in {} ms.\n",
                step.id, step.description, agent, status, result.duration_ms
            ));
        }
    }

    let done = results.iter().filter(|r| r.succeeded()).count();
    let total = plan.steps.len();
    let executive_summary = narrative.executive_summary.clone().unwrap_or_else(|| {
        if ar {
            format!("{}\nاكتملت {} من {} خطوات.", plan.thought, done, total)
        } else {
            format!("{}\nCompleted {} of {} steps.", plan.thought, done, total)
        }
    });
    let conclusions = if failure_log.is_empty() {
        if ar {
            "اكتملت جميع الخطوات بنجاح؛ لا توجد إجراءات متابعة مطلوبة.".to_string()
        } else {
            "All steps completed successfully; no follow-up actions required.".to_string()
        }
    } else {
        let mut s = if ar {
            format!("{} خطوة لم تكتمل. التوصيات:", failure_log.len())
        } else {
            format!("{} step(s) did not complete. Recommendations:", failure_log.len())
        };
        for f in &failure_log {
            s.push_str(&format!("\n- {}: {}", f.step_id, f.recommendation));
        }
        s
    };

    Report {
        lang,
        executive_summary,
        key_findings,
        detailed_analysis: analysis,
        conclusions_and_recommendations: conclusions,
        sources,
        failure_log,
    }
}
