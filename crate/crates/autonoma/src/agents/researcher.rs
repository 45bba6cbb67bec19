//! Research through interchangeable search tools. The bundled tool is an
//! offline fixture corpus; live clients implement the same trait.

use std::path::Path;
use std::sync::Arc;

use async_trait::async_trait;
use autonoma_core::manifest::CAP_WEB_SEARCH;
use autonoma_core::rules::tokenize;
use autonoma_core::AgentManifest;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agentkit::{Agent, AgentContext, AgentError, AgentOutput, AgentTask};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub source_id: String,
    pub title: String,
    pub text: String,
}

#[async_trait]
pub trait SearchTool: Send + Sync {
    fn name(&self) -> &str;
    async fn search(&self, query: &str, limit: usize) -> Result<Vec<Snippet>, String>;
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "for", "on", "in", "to", "and", "or", "about", "find", "research", "search", "look", "up",
    "what", "are", "is", "current", "latest", "me", "please", "information", "info", "data",
];

fn query_terms(query: &str) -> Vec<String> {
    tokenize(query).into_iter().filter(|t| !STOPWORDS.contains(&t.as_str())).collect()
}

/// Directory of `{id, title, text}` JSON documents.
#[derive(Debug, Clone, Default)]
pub struct FixtureCorpus {
    name: String,
    documents: Vec<Document>,
}

impl FixtureCorpus {
    pub fn new(name: impl Into<String>, mut documents: Vec<Document>) -> Self {
        documents.sort_by(|a, b| a.id.cmp(&b.id));
        FixtureCorpus { name: name.into(), documents }
    }

    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let mut documents = Vec::new();
        let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let doc: Document = serde_json::from_slice(&std::fs::read(&path)?)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
            documents.push(doc);
        }
        Ok(FixtureCorpus::new("fixture", documents))
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    /// Documents containing every content term of the query, by id.
    pub fn lookup(&self, query: &str) -> Vec<&Document> {
        let terms = query_terms(query);
        if terms.is_empty() {
            return Vec::new();
        }
        self.documents
            .iter()
            .filter(|d| {
                let words = tokenize(&format!("{} {}", d.title, d.text));
                terms.iter().all(|t| words.contains(t))
            })
            .collect()
    }
}

#[async_trait]
impl SearchTool for FixtureCorpus {
    fn name(&self) -> &str {
        &self.name
    }

    async fn search(&self, query: &str, limit: usize) -> Result<Vec<Snippet>, String> {
        Ok(self
            .lookup(query)
            .into_iter()
            .take(limit)
            .map(|d| Snippet { source_id: d.id.clone(), title: d.title.clone(), text: d.text.clone() })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub claim: String,
    pub source_id: String,
    pub retrieved_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Findings {
    pub query: String,
    pub items: Vec<Finding>,
}

impl Findings {
    pub fn render(&self) -> String {
        self.items.iter().map(|f| format!("- {} (source: {})", f.claim, f.source_id)).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResearchError {
    #[error("empty query")]
    InvalidQuery,
    #[error("research budget must be at least 1")]
    InvalidBudget,
    #[error("all search tools failed: {}", .0.join("; "))]
    AllToolsFailed(Vec<String>),
}

/// First sentence of a text, capped at 280 characters.
fn claim_of(text: &str) -> String {
    let sentence = match text.find(". ") {
        Some(i) => &text[..=i],
        None => text,
    };
    sentence.trim().chars().take(280).collect()
}

/// Calls tools in order, at most `budget` calls in total. Fails only when
/// no call succeeded.
pub async fn research(
    query: &str,
    tools: &[Arc<dyn SearchTool>],
    budget: usize,
    now_ms: u64,
) -> Result<Findings, ResearchError> {
    if query.trim().is_empty() {
        return Err(ResearchError::InvalidQuery);
    }
    if budget == 0 {
        return Err(ResearchError::InvalidBudget);
    }
    let mut items: Vec<Finding> = Vec::new();
    let mut errors = Vec::new();
    let mut any_ok = false;
    for tool in tools.iter().take(budget) {
        match tool.search(query, 10).await {
            Ok(snippets) => {
                any_ok = true;
                for s in snippets {
                    if !items.iter().any(|f| f.source_id == s.source_id) {
                        items.push(Finding { claim: claim_of(&s.text), source_id: s.source_id, retrieved_at: now_ms });
                    }
                }
            }
            Err(e) => errors.push(format!("{}: {e}", tool.name())),
        }
    }
    if !any_ok {
        if errors.is_empty() {
            errors.push("no search tools configured".into());
        }
        return Err(ResearchError::AllToolsFailed(errors));
    }
    Ok(Findings { query: query.to_string(), items })
}

pub struct ResearcherAgent {
    manifest: AgentManifest,
    tools: Vec<Arc<dyn SearchTool>>,
    budget: usize,
}

impl ResearcherAgent {
    pub fn new(tools: Vec<Arc<dyn SearchTool>>, budget: usize) -> Self {
        let mut manifest = AgentManifest::new("researcher", &[CAP_WEB_SEARCH]);
        manifest.display_name = "Researcher".into();
        manifest.heartbeat_capable = true;
        manifest.description = "Gathers sourced findings through search tools.".into();
        ResearcherAgent { manifest, tools, budget }
    }

    pub fn with_manifest(mut self, manifest: AgentManifest) -> Self {
        self.manifest = manifest;
        self
    }
}

#[async_trait]
impl Agent for ResearcherAgent {
    fn manifest(&self) -> &AgentManifest {
        &self.manifest
    }

    async fn run(&self, task: AgentTask, ctx: AgentContext) -> Result<AgentOutput, AgentError> {
        ctx.heartbeat();
        let findings = research(&task.description, &self.tools, self.budget, ctx.clock.now_ms())
            .await
            .map_err(|e| AgentError::Failed(e.to_string()))?;
        let mut out = AgentOutput::text(if findings.items.is_empty() {
            format!("no findings for \"{}\"", findings.query)
        } else {
            findings.render()
        });
        if let Some(sink) = ctx.artifacts() {
            let name = format!("findings-{}.json", task.step_id);
            let bytes = serde_json::to_vec_pretty(&findings).expect("findings serialize");
            if let Ok(r) = sink.write_artifact(&name, &bytes) {
                out.artifacts.push(r);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Broken;

    #[async_trait]
    impl SearchTool for Broken {
        fn name(&self) -> &str {
            "broken"
        }
        async fn search(&self, _q: &str, _l: usize) -> Result<Vec<Snippet>, String> {
            Err("down".into())
        }
    }

    fn corpus() -> FixtureCorpus {
        FixtureCorpus::new(
            "fixture",
            vec![
                Document { id: "doc-2".into(), title: "Battery prices fall".into(), text: "Lithium battery prices fell 20% in 2024. More text.".into() },
                Document { id: "doc-1".into(), title: "Grid storage".into(), text: "Battery prices drive grid storage adoption.".into() },
                Document { id: "doc-3".into(), title: "Solar".into(), text: "Solar module prices.".into() },
            ],
        )
    }

    #[tokio::test]
    async fn two_sourced_items() {
        let tools: Vec<Arc<dyn SearchTool>> = vec![Arc::new(corpus())];
        let f = research("battery prices", &tools, 3, 7).await.unwrap();
        assert_eq!(f.items.len(), 2);
        assert_eq!(f.items[0].source_id, "doc-1");
        assert_eq!(f.items[1].claim, "Lithium battery prices fell 20% in 2024.");
        assert!(f.items.iter().all(|i| !i.source_id.is_empty()));
    }

    #[tokio::test]
    async fn budget_and_errors() {
        let tools: Vec<Arc<dyn SearchTool>> = vec![Arc::new(Broken), Arc::new(corpus())];
        assert!(matches!(research("battery prices", &tools, 1, 0).await, Err(ResearchError::AllToolsFailed(_))));
        assert_eq!(research("battery prices", &tools, 2, 0).await.unwrap().items.len(), 2);
        assert_eq!(research("  ", &tools, 2, 0).await, Err(ResearchError::InvalidQuery));
    }
}
