use thiserror::Error;

use crate::manifest::{AgentManifest, Capability};
use crate::plan::PlanStep;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no registered agent declares `{0}`")]
pub struct NoCapableAgent(pub Capability);

/// Picks the agent for a step: the hinted agent when it declares the
/// capability, otherwise the lexicographically smallest qualifying id.
pub fn select_agent<'a, I>(step: &PlanStep, registry: I) -> Result<&'a AgentManifest, NoCapableAgent>
where
    I: IntoIterator<Item = &'a AgentManifest>,
{
    let mut best: Option<&AgentManifest> = None;
    for m in registry {
        if !m.declares(&step.required_capability) {
            continue;
        }
        if step.agent_hint.as_deref() == Some(m.id.as_str()) {
            return Ok(m);
        }
        if best.map(|b| m.id < b.id).unwrap_or(true) {
            best = Some(m);
        }
    }
    best.ok_or_else(|| NoCapableAgent(step.required_capability.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn researcher_for_web_search() {
        let reg = vec![AgentManifest::new("researcher", &["web_search"]), AgentManifest::new("coder", &["exec"])];
        let step = PlanStep::new("s", "", "web_search", &[]);
        assert_eq!(select_agent(&step, &reg).unwrap().id, "researcher");
    }

    #[test]
    fn hint_honoured_only_when_qualified() {
        let reg = vec![AgentManifest::new("fm_a", &["file_ops"]), AgentManifest::new("fm_b", &["file_ops"])];
        let mut step = PlanStep::new("s", "", "file_ops", &[]);
        step.agent_hint = Some("fm_b".into());
        assert_eq!(select_agent(&step, &reg).unwrap().id, "fm_b");
        step.agent_hint = Some("coder".into());
        assert_eq!(select_agent(&step, &reg).unwrap().id, "fm_a");
    }

    #[test]
    fn missing_capability() {
        let reg = vec![AgentManifest::new("researcher", &["web_search"])];
        let step = PlanStep::new("s", "", "ocr", &[]);
        assert_eq!(select_agent(&step, &reg), Err(NoCapableAgent(Capability::new("ocr"))));
    }
}
