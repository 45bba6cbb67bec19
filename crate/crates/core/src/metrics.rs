//! Workflow metrics computed purely from event logs.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{EventBody, WorkflowEvent};
use crate::state::{ReplayError, WorkflowState, WorkflowStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    pub workflows_total: u64,
    pub workflows_completed: u64,
    pub workflows_partial: u64,
    pub workflows_failed: u64,
    pub workflows_rejected: u64,
    pub handoffs_total: u64,
    pub handoffs_accepted: u64,
    pub task_completion_rate: f64,
    pub handoff_success_rate: f64,
    pub latency_p50_ms: u64,
    pub latency_p95_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no closed workflows in the logs")]
    NoWorkflows,
    #[error("no handoff records in the logs")]
    NoHandoffs,
    #[error("log {log}: {source}")]
    Replay { log: usize, source: ReplayError },
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(p/100 * n)`.
pub fn nearest_rank(sorted: &[u64], p: u32) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let n = sorted.len() as u64;
    let rank = (u64::from(p) * n).div_ceil(100).max(1);
    sorted[(rank - 1) as usize]
}

/// Replays every log and aggregates its closed workflows. A workflow's
/// latency runs from its `PromptReceived` to its `WorkflowClosed`.
pub fn compute_metrics<L: AsRef<[WorkflowEvent]>>(logs: &[L]) -> Result<Metrics, MetricsError> {
    let mut m = Metrics {
        workflows_total: 0,
        workflows_completed: 0,
        workflows_partial: 0,
        workflows_failed: 0,
        workflows_rejected: 0,
        handoffs_total: 0,
        handoffs_accepted: 0,
        task_completion_rate: 0.0,
        handoff_success_rate: 0.0,
        latency_p50_ms: 0,
        latency_p95_ms: 0,
    };
    let mut latencies = Vec::new();

    for (log, events) in logs.iter().enumerate() {
        let events = events.as_ref();
        let mut state = WorkflowState::default();
        let mut started_at = None;
        for (index, e) in events.iter().enumerate() {
            let expected = state.last_seq + 1;
            if e.seq != expected {
                return Err(MetricsError::Replay {
                    log,
                    source: ReplayError::GapInSequence { index, expected, found: e.seq },
                });
            }
            state
                .apply(e)
                .map_err(|source| MetricsError::Replay { log, source: ReplayError::IllegalTransition { index, source } })?;
            match &e.body {
                EventBody::PromptReceived { .. } => started_at = Some(e.timestamp),
                EventBody::HandoffRecorded { record, .. } => {
                    m.handoffs_total += 1;
                    if record.accepted {
                        m.handoffs_accepted += 1;
                    }
                }
                EventBody::WorkflowClosed { .. } => {
                    m.workflows_total += 1;
                    match state.status {
                        WorkflowStatus::Complete => m.workflows_completed += 1,
                        WorkflowStatus::PartialFailure => m.workflows_partial += 1,
                        WorkflowStatus::Rejected => m.workflows_rejected += 1,
                        _ => m.workflows_failed += 1,
                    }
                    if let Some(t0) = started_at.take() {
                        latencies.push(e.timestamp.saturating_sub(t0));
                    }
                }
                _ => {}
            }
        }
    }

    if m.workflows_total == 0 {
        return Err(MetricsError::NoWorkflows);
    }
    if m.handoffs_total == 0 {
        return Err(MetricsError::NoHandoffs);
    }
    m.task_completion_rate = m.workflows_completed as f64 / m.workflows_total as f64;
    m.handoff_success_rate = m.handoffs_accepted as f64 / m.handoffs_total as f64;
    latencies.sort_unstable();
    m.latency_p50_ms = nearest_rank(&latencies, 50);
    m.latency_p95_ms = nearest_rank(&latencies, 95);
    Ok(m)
}
