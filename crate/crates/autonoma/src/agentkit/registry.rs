use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, RwLock};

use autonoma_core::manifest::{lint_manifest, LintRule};
use autonoma_core::{AgentManifest, Capability};
use thiserror::Error;

use super::agent::Agent;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("agent id `{0}` is already registered")]
    DuplicateAgentId(String),
    #[error("manifest `{id}` fails grant lint: {}", rules.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", "))]
    GrantLintFailure { id: String, rules: Vec<LintRule> },
}

#[derive(Default)]
struct Inner {
    agents: BTreeMap<String, Arc<dyn Agent>>,
    pending_removal: BTreeSet<String>,
}

/// Capability registry. Registration takes effect immediately; removal is
/// deferred until the next workflow starts.
#[derive(Default)]
pub struct Registry {
    inner: RwLock<Inner>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, agent: Arc<dyn Agent>) -> Result<String, RegistryError> {
        let manifest = agent.manifest();
        let rules = lint_manifest(manifest);
        if !rules.is_empty() {
            return Err(RegistryError::GrantLintFailure { id: manifest.id.clone(), rules });
        }
        let id = manifest.id.clone();
        let mut inner = self.inner.write().expect("registry lock");
        if inner.agents.contains_key(&id) && !inner.pending_removal.contains(&id) {
            return Err(RegistryError::DuplicateAgentId(id));
        }
        if inner.pending_removal.remove(&id) {
            tracing::debug!(agent = %id, "re-registration cancels pending removal");
        }
        inner.agents.insert(id.clone(), agent);
        Ok(id)
    }

    /// Schedules removal at the next workflow boundary.
    pub fn remove(&self, id: &str) -> bool {
        let mut inner = self.inner.write().expect("registry lock");
        if inner.agents.contains_key(id) {
            inner.pending_removal.insert(id.to_string());
            true
        } else {
            false
        }
    }

    /// Marks a workflow boundary: applies deferred removals.
    pub fn begin_workflow(&self) {
        let mut inner = self.inner.write().expect("registry lock");
        let pending = std::mem::take(&mut inner.pending_removal);
        for id in pending {
            inner.agents.remove(&id);
        }
    }

    pub fn get(&self, id: &str) -> Option<Arc<dyn Agent>> {
        self.inner.read().expect("registry lock").agents.get(id).cloned()
    }

    pub fn manifests(&self) -> Vec<AgentManifest> {
        self.inner.read().expect("registry lock").agents.values().map(|a| a.manifest().clone()).collect()
    }

    pub fn vocabulary(&self) -> BTreeSet<Capability> {
        let inner = self.inner.read().expect("registry lock");
        inner
            .agents
            .iter()
            .filter(|(id, _)| !inner.pending_removal.contains(*id))
            .flat_map(|(_, a)| a.manifest().capabilities.iter().cloned())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("registry lock").agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
