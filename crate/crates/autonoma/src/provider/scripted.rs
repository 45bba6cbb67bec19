use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{rough_tokens, Completion, CompletionBackend, CompletionRequest, ProviderError, Usage};

pub const WILDCARD: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    /// Request fingerprint, or `*`.
    pub r#match: String,
    pub response: String,
}

impl ScriptEntry {
    pub fn any(response: impl Into<String>) -> Self {
        ScriptEntry { r#match: WILDCARD.into(), response: response.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    /// The next entry must match the request fingerprint (or be `*`).
    Strict,
    /// The next entry is served whatever its match field says.
    Lenient,
}

/// Deterministic backend that serves entries in order.
#[derive(Debug)]
pub struct ScriptedProvider {
    entries: Vec<ScriptEntry>,
    cursor: Mutex<usize>,
    mode: MatchMode,
}

impl ScriptedProvider {
    pub fn new(entries: Vec<ScriptEntry>, mode: MatchMode) -> Self {
        ScriptedProvider { entries, cursor: Mutex::new(0), mode }
    }

    pub fn strict(entries: Vec<ScriptEntry>) -> Self {
        Self::new(entries, MatchMode::Strict)
    }

    pub fn lenient(entries: Vec<ScriptEntry>) -> Self {
        Self::new(entries, MatchMode::Lenient)
    }

    /// Wildcard entries served in order.
    pub fn from_responses<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::strict(responses.into_iter().map(ScriptEntry::any).collect())
    }

    pub fn from_json(text: &str, mode: MatchMode) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?, mode))
    }

    pub fn load(path: &Path, mode: MatchMode) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, mode).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn consumed(&self) -> usize {
        *self.cursor.lock().expect("script cursor")
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - self.consumed()
    }
}

#[async_trait]
impl CompletionBackend for ScriptedProvider {
    async fn complete(&self, req: &CompletionRequest) -> Result<Completion, ProviderError> {
        let mut cursor = self.cursor.lock().expect("script cursor");
        let entry = self.entries.get(*cursor).ok_or(ProviderError::ScriptExhausted)?;
        if self.mode == MatchMode::Strict && entry.r#match != WILDCARD {
            let found = req.fingerprint();
            if found != entry.r#match {
                return Err(ProviderError::FingerprintMismatch { expected: entry.r#match.clone(), found });
            }
        }
        *cursor += 1;
        let prompt_tokens = req.messages.iter().map(|m| rough_tokens(&m.content)).sum();
        Ok(Completion {
            text: entry.response.clone(),
            usage: Usage { prompt_tokens, completion_tokens: rough_tokens(&entry.response) },
        })
    }

    fn identity(&self) -> String {
        "scripted".into()
    }
}

/// Answers every request with the same text.
#[derive(Debug, Clone)]
pub struct CannedBackend {
    text: String,
}

impl CannedBackend {
    pub fn new(text: impl Into<String>) -> Self {
        CannedBackend { text: text.into() }
    }
}

#[async_trait]
impl CompletionBackend for CannedBackend {
    async fn complete(&self, req: &CompletionRequest) -> Result<Completion, ProviderError> {
        let prompt_tokens = req.messages.iter().map(|m| rough_tokens(&m.content)).sum();
        Ok(Completion { text: self.text.clone(), usage: Usage { prompt_tokens, completion_tokens: rough_tokens(&self.text) } })
    }

    fn identity(&self) -> String {
        "canned".into()
    }
}
