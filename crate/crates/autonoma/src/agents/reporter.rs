//! Final report compilation and the on-disk failure log.

use std::sync::Arc;

use async_trait::async_trait;
use autonoma_core::fingerprint::ChatMessage;
use autonoma_core::report::{assemble_report, Narrative, Report};
use autonoma_core::{AgentManifest, ArtifactRef, Lang, Plan, TaskOutcome, TaskResult};
use thiserror::Error;

use crate::agentkit::{Agent, AgentContext, AgentError, AgentOutput, AgentTask, ArtifactSink};
use crate::provider::{CompletionRequest, Provider, RoleContext};

pub const FAILURE_LOG_FILE: &str = "failures.log";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("no task results to report")]
    NothingToReport,
}

fn narrative_prompt(plan: &Plan, results: &[TaskResult], lang: Lang) -> Vec<ChatMessage> {
    let mut digest = format!("Request: {}\n", plan.thought);
    for r in results {
        let line = match &r.outcome {
            TaskOutcome::Succeeded { summary, .. } => format!("- {} succeeded: {}\n", r.step_id, summary),
            TaskOutcome::Failed { cause, .. } => format!("- {} failed: {}\n", r.step_id, cause),
            TaskOutcome::Skipped { blocked_by } => format!("- {} skipped (blocked by {})\n", r.step_id, blocked_by),
        };
        digest.push_str(&line);
    }
    let language = if lang == Lang::Ar { "Arabic" } else { "English" };
    vec![
        ChatMessage::system(format!(
            "You are the reporter. Write a short executive summary of the workflow results in {language}. \
             Plain text, no headings."
        )),
        ChatMessage::user(digest),
    ]
}

/// Builds the report. With a provider, the executive summary is drafted by
/// the reporter role; any provider error falls back to the template.
pub async fn compile_report(
    plan: &Plan,
    results: &[TaskResult],
    lang: Lang,
    provider: Option<&Provider>,
) -> Result<Report, ReportError> {
    if results.is_empty() {
        return Err(ReportError::NothingToReport);
    }
    let mut narrative = Narrative::default();
    if let Some(p) = provider {
        let req = CompletionRequest::new(RoleContext::Reporter, narrative_prompt(plan, results, lang));
        match p.complete(&req).await {
            Ok(c) if !c.text.trim().is_empty() => narrative.executive_summary = Some(c.text.trim().to_string()),
            Ok(_) => {}
            Err(e) => tracing::warn!(error = %e, "reporter narrative unavailable, using template"),
        }
    }
    Ok(assemble_report(plan, results, lang, &narrative))
}

/// Writes `failures.log`, one JSON record per line. Returns `None` when the
/// report has no failures.
pub fn write_failure_log(report: &Report, sink: &dyn ArtifactSink) -> Result<Option<ArtifactRef>, String> {
    if report.failure_log.is_empty() {
        return Ok(None);
    }
    let mut body = String::new();
    for entry in &report.failure_log {
        body.push_str(&serde_json::to_string(entry).map_err(|e| e.to_string())?);
        body.push('\n');
    }
    sink.write_artifact(FAILURE_LOG_FILE, body.as_bytes()).map(Some)
}

/// Markdown rendering used for the reporter's chat message and
/// `report.md`. Section headings follow the report language.
pub fn render_markdown(report: &Report) -> String {
    let ar = report.lang == Lang::Ar;
    let h = |en: &'static str, ar_text: &'static str| if ar { ar_text } else { en };
    let mut out = format!("## {}
{}
", h("Executive summary", "الملخص التنفيذي"), report.executive_summary.trim());
    if !report.key_findings.is_empty() {
        out.push_str(&format!("\n## {}\n", h("Key findings", "النتائج الرئيسية")));
        for f in &report.key_findings {
            out.push_str(&format!("- {f}\n"));
        }
    }
    out.push_str(&format!("\n## {}\n{}", h("Detailed analysis", "التحليل التفصيلي"), report.detailed_analysis));
    out.push_str(&format!(
        "\n## {}\n{}\n",
        h("Conclusions and recommendations", "الاستنتاجات والتوصيات"),
        report.conclusions_and_recommendations
    ));
    if !report.sources.is_empty() {
        out.push_str(&format!("\n## {}\n", h("Sources", "المصادر")));
        for s in &report.sources {
            out.push_str(&format!("- {s}\n"));
        }
    }
    out
}

/// Report step inside a plan: merges upstream outputs into one document.
pub struct ReporterAgent {
    manifest: AgentManifest,
    provider: Option<Arc<Provider>>,
}

impl ReporterAgent {
    pub fn new(provider: Option<Arc<Provider>>) -> Self {
        let mut manifest = AgentManifest::new("reporter", &[super::CAP_REPORT]);
        manifest.display_name = "Reporter".into();
        manifest.heartbeat_capable = true;
        manifest.description = "Aggregates upstream results into a structured report.".into();
        ReporterAgent { manifest, provider }
    }
}

#[async_trait]
impl Agent for ReporterAgent {
    fn manifest(&self) -> &AgentManifest {
        &self.manifest
    }

    async fn run(&self, task: AgentTask, ctx: AgentContext) -> Result<AgentOutput, AgentError> {
        ctx.heartbeat();
        let plan = Plan { thought: task.description.clone(), steps: Vec::new(), created_by: "reporter".into() };
        let results: Vec<TaskResult> = task
            .inputs
            .iter()
            .map(|i| TaskResult {
                step_id: i.step_id.clone(),
                outcome: TaskOutcome::Succeeded { artifacts: i.artifacts.clone(), summary: i.summary.clone() },
                duration_ms: 0,
                agent_id: None,
            })
            .collect();
        let mut body = String::new();
        if results.is_empty() {
            body.push_str(&task.description);
        } else {
            let narrative = match &self.provider {
                Some(p) => compile_report(&plan, &results, task.lang, Some(p)).await.ok().map(|r| r.executive_summary),
                None => None,
            };
            body.push_str(narrative.as_deref().unwrap_or(&task.description));
            body.push('\n');
            for i in &task.inputs {
                body.push_str(&format!("\n## {}\n{}\n", i.step_id, i.summary));
            }
        }
        let mut output = AgentOutput::text(body.clone());
        if let Some(sink) = ctx.artifacts() {
            let name = format!("report-{}.md", task.step_id);
            if let Ok(r) = sink.write_artifact(&name, body.as_bytes()) {
                output.artifacts.push(r);
            }
        }
        Ok(output)
    }
}
