//! Fault-injection benchmark: synthetic workflows run through the full
//! engine on a logical clock, with metrics computed from the event logs.

mod fault;
mod report;
mod stats;
mod workload;

use std::collections::HashMap;
use std::sync::Arc;

use async_trait::async_trait;
use autonoma_core::metrics::{compute_metrics, Metrics, MetricsError};
use autonoma_core::{validate_plan, ExecutionPolicy, Plan, WorkflowEvent};
use futures::StreamExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fault::{FaultAgent, FaultError, FaultModel, Injected, Latency};
pub use report::{non_lan_addresses, probe_filter, public_ipv4, report_metrics, FilterProbe, Format};
pub use stats::{binomial_interval, expected_completion, step_success_prob};
pub use workload::{generate_workload, Shape, ShapeParseError, ShapePolicy, WorkflowSpec, MAX_RANDOM_NODES, SYNTHETIC_CAP};

use crate::agentkit::Registry;
use crate::clock::RuntimeClock;
use crate::coordinator::Coordinator;
use crate::engine::{Engine, EngineError, EngineSettings};
use crate::planner::{PlanRequest, Planner, PlannerError};
use crate::provider::{CannedBackend, Provider};
use crate::store::Store;

pub const CONFIDENCE: f64 = 0.99;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("empty workload")]
    EmptyWorkload,
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("runtime: {0}")]
    Runtime(#[from] std::io::Error),
}

/// Plans looked up by prompt text.
pub struct WorkloadPlanner {
    plans: HashMap<String, Plan>,
}

impl WorkloadPlanner {
    pub fn new(workload: &[WorkflowSpec]) -> Self {
        WorkloadPlanner { plans: workload.iter().map(|w| (w.prompt.clone(), w.plan.clone())).collect() }
    }
}

#[async_trait]
impl Planner for WorkloadPlanner {
    async fn plan(&self, req: &PlanRequest) -> Result<autonoma_core::ValidatedPlan, PlannerError> {
        let plan = self.plans.get(&req.request_text).cloned().ok_or_else(|| {
            PlannerError::PlanParse(autonoma_core::schema::SchemaViolation {
                path: "/".into(),
                message: format!("no synthetic plan for `{}`", req.request_text),
            })
        })?;
        validate_plan(plan, &req.capability_vocabulary).map_err(|e| {
            PlannerError::PlanParse(autonoma_core::schema::SchemaViolation { path: "/steps".into(), message: e.to_string() })
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub policy: ExecutionPolicy,
    /// Workflows in flight at once.
    pub parallelism: usize,
    /// Persist every conversation here when set.
    pub store: Option<Store>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { policy: ExecutionPolicy::default(), parallelism: 32, store: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub metrics: Metrics,
    /// One log per workflow, in workload order.
    pub logs: Vec<Vec<WorkflowEvent>>,
    pub conversation_ids: Vec<String>,
    pub expected_completion: f64,
}

/// Engine wired to a single synthetic worker and the workload's plans.
pub fn bench_engine(workload: &[WorkflowSpec], fault: &FaultModel, cfg: &BenchConfig) -> Result<Engine, BenchError> {
    let provider = Arc::new(Provider::single(Arc::new(CannedBackend::new("task"))));
    let registry = Arc::new(Registry::new());
    registry
        .register(Arc::new(FaultAgent::new("synthetic", *fault, cfg.policy.heartbeat_interval_ms)))
        .expect("synthetic agent manifest is clean");
    let settings = EngineSettings { policy: cfg.policy, pregather_budget: 0, narrative: false };
    let mut b = Engine::builder(
        Arc::new(Coordinator::with_defaults(provider.clone())),
        Arc::new(WorkloadPlanner::new(workload)),
        provider,
        registry,
    )
    .settings(settings)
    .clock(RuntimeClock::logical());
    if let Some(store) = &cfg.store {
        b = b.store(store.clone(), false);
    }
    Ok(b.build()?)
}

/// Seeded conversation id, so equal seeds give byte-identical logs.
pub fn conversation_id(seed: u64, index: usize) -> String {
    let digest = autonoma_core::canonical::digest_of(&("conversation", seed, index)).expect("ids serialize");
    let mut bytes = [0u8; 16];
    for (i, b) in bytes.iter_mut().enumerate() {
        *b = u8::from_str_radix(&digest[2 * i..2 * i + 2], 16).expect("hex digest");
    }
    uuid::Builder::from_random_bytes(bytes).into_uuid().hyphenated().to_string()
}

/// Runs every workflow to its close. Call on a runtime with paused time so
/// latencies and timeouts are logical.
pub async fn run_benchmark(workload: &[WorkflowSpec], fault: &FaultModel, cfg: &BenchConfig) -> Result<BenchRun, BenchError> {
    if workload.is_empty() {
        return Err(BenchError::EmptyWorkload);
    }
    fault.validate()?;
    let engine = bench_engine(workload, fault, cfg)?;
    let results: Vec<Result<(String, Vec<WorkflowEvent>), EngineError>> = futures::stream::iter(workload)
        .map(|spec| {
            let engine = engine.clone();
            async move {
                let conv = engine.new_conversation_with_id(&conversation_id(fault.seed, spec.index))?;
                engine.prompt(&conv, &spec.prompt).await?;
                Ok((conv.id(), conv.journal().events()))
            }
        })
        .buffered(cfg.parallelism.max(1))
        .collect()
        .await;
    let mut logs = Vec::with_capacity(results.len());
    let mut ids = Vec::with_capacity(results.len());
    for r in results {
        let (id, log) = r?;
        ids.push(id);
        logs.push(log);
    }
    let metrics = compute_metrics(&logs)?;
    Ok(BenchRun {
        metrics,
        logs,
        conversation_ids: ids,
        expected_completion: expected_completion(workload, fault, cfg.policy.retry_limit),
    })
}

/// [`run_benchmark`] on a fresh single-threaded runtime with paused time.
pub fn run_blocking(workload: &[WorkflowSpec], fault: &FaultModel, cfg: &BenchConfig) -> Result<BenchRun, BenchError> {
    let rt = tokio::runtime::Builder::new_current_thread().enable_time().start_paused(true).build()?;
    rt.block_on(run_benchmark(workload, fault, cfg))
}

/// One cell of the analytic-versus-measured grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub fail_prob: f64,
    pub retry_limit: u32,
    pub shape: Shape,
    pub n: u64,
    pub expected: f64,
    pub completed: u64,
    pub lo: u64,
    pub hi: u64,
    pub handoff_success_rate: f64,
}

impl GridCell {
    pub fn measured(&self) -> f64 {
        self.completed as f64 / self.n as f64
    }

    pub fn passed(&self) -> bool {
        (self.lo..=self.hi).contains(&self.completed)
    }
}

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub n: usize,
    pub seed: u64,
    pub fail_probs: Vec<f64>,
    pub retry_limits: Vec<u32>,
    pub shapes: Vec<Shape>,
    pub stall_prob: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n: 500,
            seed: 42,
            fail_probs: vec![0.0, 0.1, 0.3],
            retry_limits: vec![0, 1, 2],
            shapes: vec![Shape::Single, Shape::Chain(3)],
            stall_prob: 0.0,
        }
    }
}

/// Runs every (f, r, shape) combination and checks the completion count
/// against the exact binomial acceptance region of the analytic rate.
pub fn verify_grid(spec: &GridSpec, base: &BenchConfig) -> Result<Vec<GridCell>, BenchError> {
    let mut cells = Vec::new();
    for &shape in &spec.shapes {
        let workload = generate_workload(spec.seed, spec.n, ShapePolicy::Fixed(shape));
        for &f in &spec.fail_probs {
            for &r in &spec.retry_limits {
                let fault = FaultModel::new(f, spec.stall_prob, Latency::default(), spec.seed)?;
                let mut cfg = base.clone();
                cfg.policy.retry_limit = r;
                let run = run_blocking(&workload, &fault, &cfg)?;
                let p = run.expected_completion;
                let (lo, hi) = binomial_interval(spec.n as u64, p, CONFIDENCE);
                cells.push(GridCell {
                    fail_prob: f,
                    retry_limit: r,
                    shape,
                    n: spec.n as u64,
                    expected: p,
                    completed: run.metrics.workflows_completed,
                    lo,
                    hi,
                    handoff_success_rate: run.metrics.handoff_success_rate,
                });
            }
        }
    }
    Ok(cells)
}

pub fn render_grid(cells: &[GridCell]) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<9} {:>5} {:>3} {:>9} {:>9} {:>13} {:>9}  result",
        "shape", "f", "r", "expected", "measured", "99% region", "handoff"
    );
    for c in cells {
        let _ = writeln!(
            out,
            "{:<9} {:>5.2} {:>3} {:>9.4} {:>9.4} {:>13} {:>9.4}  {}",
            c.shape.to_string(),
            c.fail_prob,
            c.retry_limit,
            c.expected,
            c.measured(),
            format!("[{}, {}]", c.lo, c.hi),
            c.handoff_success_rate,
            if c.passed() { "ok" } else { "DEVIATION" }
        );
    }
    out
}
