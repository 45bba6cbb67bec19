//! Synthetic workflow shapes.

use std::fmt;
use std::str::FromStr;

use autonoma_core::{Plan, PlanStep};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SYNTHETIC_CAP: &str = "synthetic";
/// Largest random DAG.
pub const MAX_RANDOM_NODES: usize = 8;
const RANDOM_EDGE_PROB: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Single,
    Chain(u32),
    /// a → {b, c} → d
    Diamond,
    /// Up to eight nodes, edges only from lower to higher index.
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown shape `{0}` (expected single, chain-K, diamond, random or mixed)")]
pub struct ShapeParseError(pub String);

impl FromStr for Shape {
    type Err = ShapeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Shape::Single),
            "diamond" => Ok(Shape::Diamond),
            "random" => Ok(Shape::Random),
            _ => s
                .strip_prefix("chain-")
                .and_then(|k| k.parse().ok())
                .filter(|k| *k >= 1)
                .map(Shape::Chain)
                .ok_or_else(|| ShapeParseError(s.to_string())),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Single => f.write_str("single"),
            Shape::Chain(k) => write!(f, "chain-{k}"),
            Shape::Diamond => f.write_str("diamond"),
            Shape::Random => f.write_str("random"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapePolicy {
    Fixed(Shape),
    /// Each workflow draws one of single, chain-3, diamond, random.
    Mixed,
}

impl FromStr for ShapePolicy {
    type Err = ShapeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "mixed" {
            Ok(ShapePolicy::Mixed)
        } else {
            s.parse().map(ShapePolicy::Fixed)
        }
    }
}

impl fmt::Display for ShapePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapePolicy::Fixed(s) => s.fmt(f),
            ShapePolicy::Mixed => f.write_str("mixed"),
        }
    }
}

/// One generated workflow. `prompt` is unique within a workload and keys
/// the plan; step descriptions key the injected faults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowSpec {
    pub index: usize,
    pub shape: Shape,
    pub prompt: String,
    pub plan: Plan,
}

impl WorkflowSpec {
    pub fn step_count(&self) -> usize {
        self.plan.steps.len()
    }
}

fn step(index: usize, i: usize, deps: &[usize]) -> PlanStep {
    let id = format!("s{}", i + 1);
    let deps: Vec<String> = deps.iter().map(|d| format!("s{}", d + 1)).collect();
    let deps: Vec<&str> = deps.iter().map(String::as_str).collect();
    PlanStep::new(&id, &format!("wf{index}:{id}"), SYNTHETIC_CAP, &deps)
}

fn build(index: usize, shape: Shape, rng: &mut ChaCha8Rng) -> Plan {
    let steps = match shape {
        Shape::Single => vec![step(index, 0, &[])],
        Shape::Chain(k) => (0..k as usize).map(|i| if i == 0 { step(index, 0, &[]) } else { step(index, i, &[i - 1]) }).collect(),
        Shape::Diamond => vec![step(index, 0, &[]), step(index, 1, &[0]), step(index, 2, &[0]), step(index, 3, &[1, 2])],
        Shape::Random => {
            let n = rng.random_range(1..=MAX_RANDOM_NODES);
            (0..n)
                .map(|j| {
                    let deps: Vec<usize> = (0..j).filter(|_| rng.random_bool(RANDOM_EDGE_PROB)).collect();
                    step(index, j, &deps)
                })
                .collect()
        }
    };
    Plan { thought: format!("synthetic {shape} workflow"), steps, created_by: "bench".into() }
}

/// Deterministic per `seed`.
pub fn generate_workload(seed: u64, n: usize, policy: ShapePolicy) -> Vec<WorkflowSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|index| {
            let shape = match policy {
                ShapePolicy::Fixed(s) => s,
                ShapePolicy::Mixed => [Shape::Single, Shape::Chain(3), Shape::Diamond, Shape::Random][rng.random_range(0..4)],
            };
            let plan = build(index, shape, &mut rng);
            WorkflowSpec { index, shape, prompt: format!("Run synthetic workflow {index}"), plan }
        })
        .collect()
}
