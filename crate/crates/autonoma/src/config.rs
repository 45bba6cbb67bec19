//! Service configuration: a TOML document, then `AUTONOMA_*` environment
//! overrides, then command-line flags. The grammar is documented in
//! `docs/config.md`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use autonoma_core::netfilter::{default_allowlist, ip_filter, Cidr, FilterDecision};
use autonoma_core::ExecutionPolicy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::{CannedBackend, CompletionBackend, MatchMode, OpenAiBackend, Provider, RoleContext, ScriptedProvider};

pub const ENV_PREFIX: &str = "AUTONOMA_";
/// Env vars with the prefix that are not configuration keys.
const ENV_RESERVED: &[&str] = &["AUTONOMA_LOG", "AUTONOMA_CONFIG"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Parse(String),
    #[error("environment override {key}: {reason}")]
    Env { key: String, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("refusing to bind {0}: address is outside the allowlist (pass --allow-non-lan-bind to override)")]
    BindOutsideAllowlist(SocketAddr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// OpenAI-compatible chat completions endpoint.
    Openai,
    /// Replays a JSON script file.
    Scripted,
    /// Always answers with `text`.
    Canned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Name of the env var holding the API key; the key itself never
    /// lives in the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(default)]
    pub strict: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl BackendConfig {
    pub fn canned(text: &str) -> Self {
        BackendConfig {
            kind: BackendKind::Canned,
            base_url: None,
            model: None,
            api_key_env: None,
            script: None,
            strict: false,
            text: Some(text.to_string()),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn CompletionBackend>, ConfigError> {
        match self.kind {
            BackendKind::Openai => {
                let base = self.base_url.clone().ok_or_else(|| ConfigError::Invalid("openai backend needs base_url".into()))?;
                let model = self.model.clone().ok_or_else(|| ConfigError::Invalid("openai backend needs model".into()))?;
                let key = self.api_key_env.as_ref().and_then(|k| std::env::var(k).ok());
                Ok(Arc::new(OpenAiBackend::new(base, model, key)))
            }
            BackendKind::Scripted => {
                let path = self.script.as_ref().ok_or_else(|| ConfigError::Invalid("scripted backend needs script".into()))?;
                let mode = if self.strict { MatchMode::Strict } else { MatchMode::Lenient };
                let p = ScriptedProvider::load(path, mode).map_err(|source| ConfigError::Read { path: path.clone(), source })?;
                Ok(Arc::new(p))
            }
            BackendKind::Canned => Ok(Arc::new(CannedBackend::new(self.text.clone().unwrap_or_default()))),
        }
    }
}

/// Backends per calling role; roles without an entry use `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProvidersConfig {
    pub default: BackendConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinator: Option<BackendConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planner: Option<BackendConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<BackendConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reporter: Option<BackendConfig>,
}

impl Default for ProvidersConfig {
    /// Offline default: every request is classified as a task and plans
    /// fall back through the repair path.
    fn default() -> Self {
        ProvidersConfig { default: BackendConfig::canned("task"), coordinator: None, planner: None, agent: None, reporter: None }
    }
}

impl ProvidersConfig {
    pub fn for_role(&self, role: RoleContext) -> Option<&BackendConfig> {
        match role {
            RoleContext::Coordinator => self.coordinator.as_ref(),
            RoleContext::Planner => self.planner.as_ref(),
            RoleContext::Agent => self.agent.as_ref(),
            RoleContext::Reporter => self.reporter.as_ref(),
        }
    }

    pub fn build(&self) -> Result<Provider, ConfigError> {
        let mut p = Provider::single(self.default.build()?);
        for role in RoleContext::ALL {
            if let Some(b) = self.for_role(role) {
                p = p.with_role(role, b.build()?);
            }
        }
        Ok(p)
    }
}

/// An out-of-process agent started from `program args...`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PluginConfig {
    pub program: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub allowlist: Vec<Cidr>,
    /// Allow binding an address outside the allowlist.
    pub allow_non_lan_bind: bool,
    pub pairing_ttl_secs: u64,
    pub max_body_bytes: usize,
    pub storage_root: PathBuf,
    /// Root of the file-manager and coder jail; defaults to
    /// `<storage_root>/jail`.
    pub jail_root: Option<PathBuf>,
    pub policy: ExecutionPolicy,
    /// Directory of `{id, title, text}` JSON documents the researcher
    /// searches.
    pub corpus_dir: Option<PathBuf>,
    /// Search calls the planner may make before planning.
    pub pregather_budget: u32,
    pub providers: ProvidersConfig,
    pub plugins: Vec<PluginConfig>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8787)),
            allowlist: default_allowlist(),
            allow_non_lan_bind: false,
            pairing_ttl_secs: 8 * 60 * 60,
            max_body_bytes: 256 * 1024,
            storage_root: PathBuf::from("autonoma-data"),
            jail_root: None,
            policy: ExecutionPolicy::default(),
            corpus_dir: None,
            pregather_budget: 0,
            providers: ProvidersConfig::default(),
            plugins: Vec::new(),
        }
    }
}

impl ServiceConfig {
    /// Reads `path` (if any) and applies overrides from `env`.
    pub fn load<I>(path: Option<&Path>, env: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_path_buf(), source })?,
            None => String::new(),
        };
        Self::from_toml_with_env(&text, env)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::from_toml_with_env(text, std::iter::empty())
    }

    pub fn from_toml_with_env<I>(text: &str, env: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let overrides: BTreeMap<String, String> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX) && !ENV_RESERVED.contains(&k.as_str()))
            .collect();
        for (key, raw) in overrides {
            apply_override(&mut table, &key, &raw)?;
        }
        let cfg: ServiceConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.allowlist.is_empty() {
            return Err(ConfigError::Invalid("allowlist must not be empty".into()));
        }
        if self.pairing_ttl_secs == 0 {
            return Err(ConfigError::Invalid("pairing_ttl_secs must be positive".into()));
        }
        if self.max_body_bytes == 0 {
            return Err(ConfigError::Invalid("max_body_bytes must be positive".into()));
        }
        self.policy.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Refuses a bind address outside the allowlist unless overridden.
    pub fn check_bind(&self) -> Result<(), ConfigError> {
        if self.allow_non_lan_bind || ip_filter(self.bind.ip(), &self.allowlist) == FilterDecision::Allow {
            Ok(())
        } else {
            Err(ConfigError::BindOutsideAllowlist(self.bind))
        }
    }

    pub fn jail_root(&self) -> PathBuf {
        self.jail_root.clone().unwrap_or_else(|| self.storage_root.join("jail"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// `AUTONOMA_POLICY__RETRY_LIMIT=3` sets `policy.retry_limit = 3`. The value
/// is read as a TOML literal when it parses as one and as a string
/// otherwise; `allowlist` also accepts a comma-separated list.
fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), ConfigError> {
    let env_err = |reason: &str| ConfigError::Env { key: key.to_string(), reason: reason.to_string() };
    let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(|s| s.to_ascii_lowercase()).collect();
    if path.iter().any(|s| s.is_empty()) {
        return Err(env_err("empty path segment"));
    }
    let value = parse_literal(raw).unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let value = match (path.as_slice(), value) {
        ([k], toml::Value::String(s)) if k == "allowlist" => {
            toml::Value::Array(s.split(',').map(|c| toml::Value::String(c.trim().to_string())).collect())
        }
        (_, v) => v,
    };
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for seg in parents {
        let entry = cur.entry(seg.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| env_err("path crosses a non-table value"))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> Option<toml::Value> {
    let doc: toml::Table = toml::from_str(&format!("v = {raw}")).ok()?;
    doc.get("v").cloned()
}
