//! Strict parser for the planner's plan document:
//!
//! ```json
//! {"thought": "...",
//!  "steps": [{"id": "s1", "description": "...", "required_capability": "web_search",
//!             "agent_hint": "researcher", "depends_on": []}]}
//! ```
//!
//! `agent_hint` is optional, every other field is required and unknown fields
//! are rejected. Violations carry a JSON Pointer to the offending location so
//! the repair prompt can quote it.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::manifest::Capability;
use crate::plan::{Plan, PlanStep, StepId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("schema violation at {path}: {message}")]
pub struct SchemaViolation {
    pub path: String,
    pub message: String,
}

fn violation(path: impl Into<String>, message: impl Into<String>) -> SchemaViolation {
    SchemaViolation { path: path.into(), message: message.into() }
}

const TOP_FIELDS: &[&str] = &["thought", "steps"];
const STEP_FIELDS: &[&str] = &["id", "description", "required_capability", "agent_hint", "depends_on"];

/// Models often wrap JSON in a fenced block; take the fenced body when present.
fn strip_fence(raw: &str) -> &str {
    let t = raw.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let body = rest.split_once('\n').map(|(_, b)| b).unwrap_or("");
        if let Some(end) = body.rfind("```") {
            return body[..end].trim();
        }
    }
    t
}

pub fn parse_plan(raw: &str, vocabulary: &BTreeSet<Capability>) -> Result<Plan, SchemaViolation> {
    let value: Value = serde_json::from_str(strip_fence(raw)).map_err(|e| violation("", format!("invalid JSON: {e}")))?;
    let top = value.as_object().ok_or_else(|| violation("", "expected an object"))?;
    reject_unknown(top, TOP_FIELDS, "")?;

    let thought = match top.get("thought") {
        None => return Err(violation("/thought", "missing field")),
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        Some(Value::String(_)) => return Err(violation("/thought", "must not be empty")),
        Some(_) => return Err(violation("/thought", "expected a string")),
    };

    let steps_value = top.get("steps").ok_or_else(|| violation("/steps", "missing field"))?;
    let raw_steps = steps_value.as_array().ok_or_else(|| violation("/steps", "expected an array"))?;
    if raw_steps.is_empty() {
        return Err(violation("/steps", "must contain at least one step"));
    }

    let mut steps = Vec::with_capacity(raw_steps.len());
    let mut ids = BTreeSet::new();
    for (i, raw_step) in raw_steps.iter().enumerate() {
        let base = format!("/steps/{i}");
        let obj = raw_step.as_object().ok_or_else(|| violation(base.clone(), "expected an object"))?;
        reject_unknown(obj, STEP_FIELDS, &base)?;

        let id = required_string(obj, &base, "id")?;
        if !is_step_token(&id) {
            return Err(violation(format!("{base}/id"), "must be 1-64 chars of [A-Za-z0-9_-]"));
        }
        if !ids.insert(id.clone()) {
            return Err(violation(format!("{base}/id"), format!("duplicate step id `{id}`")));
        }
        let description = required_string(obj, &base, "description")?;
        let capability = required_string(obj, &base, "required_capability")?;
        let capability = Capability(capability);
        if !vocabulary.contains(&capability) {
            return Err(violation(
                format!("{base}/required_capability"),
                format!("unknown capability `{capability}`"),
            ));
        }
        let agent_hint = match obj.get("agent_hint") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(violation(format!("{base}/agent_hint"), "expected a string")),
        };
        let deps_path = format!("{base}/depends_on");
        let deps = obj
            .get("depends_on")
            .ok_or_else(|| violation(deps_path.clone(), "missing field"))?
            .as_array()
            .ok_or_else(|| violation(deps_path.clone(), "expected an array of step ids"))?;
        let mut depends_on = Vec::with_capacity(deps.len());
        for (j, d) in deps.iter().enumerate() {
            let d = d.as_str().ok_or_else(|| violation(format!("{deps_path}/{j}"), "expected a string"))?;
            depends_on.push(StepId(d.to_string()));
        }
        steps.push(PlanStep { id: StepId(id), description, required_capability: capability, agent_hint, depends_on });
    }

    for (i, step) in steps.iter().enumerate() {
        if let Some(missing) = step.depends_on.iter().find(|d| !ids.contains(&d.0)) {
            return Err(violation(format!("/steps/{i}/depends_on"), format!("undeclared step id `{missing}`")));
        }
    }

    Ok(Plan { thought, steps, created_by: String::new() })
}

fn reject_unknown(obj: &Map<String, Value>, allowed: &[&str], base: &str) -> Result<(), SchemaViolation> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(violation(format!("{base}/{k}"), "unknown field")),
        None => Ok(()),
    }
}

fn required_string(obj: &Map<String, Value>, base: &str, field: &str) -> Result<String, SchemaViolation> {
    match obj.get(field) {
        None => Err(violation(format!("{base}/{field}"), "missing field")),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(violation(format!("{base}/{field}"), "expected a string")),
    }
}

fn is_step_token(s: &str) -> bool {
    !s.is_empty() && s.len() <= 64 && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}
