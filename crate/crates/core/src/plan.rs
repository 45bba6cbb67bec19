//! Plans, structural validation and longest-path dependency levels.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::Capability;

/// Short unique token naming a plan step.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StepId(pub String);

impl StepId {
    pub fn new(id: impl Into<String>) -> Self {
        StepId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StepId {
    fn from(s: &str) -> Self {
        StepId(s.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanStep {
    pub id: StepId,
    pub description: String,
    pub required_capability: Capability,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_hint: Option<String>,
    #[serde(default)]
    pub depends_on: Vec<StepId>,
}

impl PlanStep {
    pub fn new(id: &str, description: &str, capability: &str, depends_on: &[&str]) -> Self {
        PlanStep {
            id: StepId::from(id),
            description: description.into(),
            required_capability: Capability::new(capability),
            agent_hint: None,
            depends_on: depends_on.iter().map(|d| StepId::from(*d)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plan {
    pub thought: String,
    pub steps: Vec<PlanStep>,
    #[serde(default)]
    pub created_by: String,
}

impl Plan {
    pub fn step(&self, id: &StepId) -> Option<&PlanStep> {
        self.steps.iter().find(|s| &s.id == id)
    }

    /// Every step that transitively depends on `id`, in declaration order.
    pub fn descendants(&self, id: &StepId) -> Vec<StepId> {
        let mut marked: BTreeSet<&StepId> = BTreeSet::new();
        marked.insert(id);
        // Fixpoint over declaration order; forward references are allowed, so
        // one pass is not always enough.
        loop {
            let before = marked.len();
            for step in &self.steps {
                if !marked.contains(&step.id) && step.depends_on.iter().any(|d| marked.contains(d)) {
                    marked.insert(&step.id);
                }
            }
            if marked.len() == before {
                break;
            }
        }
        self.steps
            .iter()
            .filter(|s| &s.id != id && marked.contains(&s.id))
            .map(|s| s.id.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("plan has no steps")]
    EmptyPlan,
    #[error("duplicate step id `{0}`")]
    DuplicateStepId(StepId),
    #[error("step `{step}` requires unregistered capability `{capability}`")]
    UnknownCapability { step: StepId, capability: Capability },
    #[error("step `{step}` depends on undeclared step `{missing}`")]
    UnknownDependency { step: StepId, missing: StepId },
    #[error("dependency cycle through {0:?}")]
    CyclicDependency(Vec<StepId>),
}

/// A plan that passed [`validate_plan`], annotated with its dependency levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatedPlan {
    plan: Plan,
    levels: Vec<Vec<StepId>>,
}

impl ValidatedPlan {
    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn levels(&self) -> &[Vec<StepId>] {
        &self.levels
    }

    pub fn into_plan(self) -> Plan {
        self.plan
    }

    /// Level index of a step.
    pub fn level_of(&self, id: &StepId) -> Option<usize> {
        self.levels.iter().position(|l| l.contains(id))
    }
}

pub fn validate_plan(plan: Plan, registry_capabilities: &BTreeSet<Capability>) -> Result<ValidatedPlan, PlanError> {
    if plan.steps.is_empty() {
        return Err(PlanError::EmptyPlan);
    }
    let mut index: BTreeMap<&StepId, usize> = BTreeMap::new();
    for (i, step) in plan.steps.iter().enumerate() {
        if index.insert(&step.id, i).is_some() {
            return Err(PlanError::DuplicateStepId(step.id.clone()));
        }
    }
    for step in &plan.steps {
        if !registry_capabilities.contains(&step.required_capability) {
            return Err(PlanError::UnknownCapability {
                step: step.id.clone(),
                capability: step.required_capability.clone(),
            });
        }
        if let Some(missing) = step.depends_on.iter().find(|d| !index.contains_key(d)) {
            return Err(PlanError::UnknownDependency {
                step: step.id.clone(),
                missing: missing.clone(),
            });
        }
    }
    let levels = compute_levels(&plan, &index)?;
    Ok(ValidatedPlan { plan, levels })
}

/// Longest-path layering: a root is level 0, every other step sits one level
/// above its deepest dependency. Steps inside a level keep declaration order.
pub fn dependency_levels(plan: &ValidatedPlan) -> Vec<Vec<StepId>> {
    plan.levels.clone()
}

fn compute_levels(plan: &Plan, index: &BTreeMap<&StepId, usize>) -> Result<Vec<Vec<StepId>>, PlanError> {
    let n = plan.steps.len();
    let mut indegree = vec![0usize; n];
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, step) in plan.steps.iter().enumerate() {
        let deps: BTreeSet<usize> = step.depends_on.iter().map(|d| index[d]).collect();
        indegree[i] = deps.len();
        for d in deps {
            dependents[d].push(i);
        }
    }

    // Kahn's algorithm carrying the longest distance from any root.
    let mut level = vec![0usize; n];
    let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut head = 0;
    while head < queue.len() {
        let u = queue[head];
        head += 1;
        for &v in &dependents[u] {
            level[v] = level[v].max(level[u] + 1);
            indegree[v] -= 1;
            if indegree[v] == 0 {
                queue.push(v);
            }
        }
    }
    if queue.len() != n {
        let stuck = (0..n)
            .filter(|&i| indegree[i] > 0)
            .map(|i| plan.steps[i].id.clone())
            .collect();
        return Err(PlanError::CyclicDependency(stuck));
    }

    let depth = level.iter().copied().max().unwrap_or(0) + 1;
    let mut levels = vec![Vec::new(); depth];
    for (i, step) in plan.steps.iter().enumerate() {
        levels[level[i]].push(step.id.clone());
    }
    Ok(levels)
}
