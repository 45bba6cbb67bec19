//! Agent manifests, privilege grants and the grant linter.
//!
//! The lint table is fixed at build time. Each rule keeps a manifest's
//! grants minimal for the capabilities it declares: a grant nothing needs is
//! as much a failure as a capability that cannot work without its grant.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Capability tag, e.g. `web_search` or `file_ops`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Capability(pub String);

impl Capability {
    pub fn new(tag: &str) -> Self {
        Capability(tag.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub const CAP_FILE_OPS: &str = "file_ops";
pub const CAP_EXEC: &str = "exec";
pub const CAP_WEB_SEARCH: &str = "web_search";
pub const CAP_BROWSE: &str = "browse";

/// Capabilities that legitimately touch the filesystem.
const FS_CAPABILITIES: &[&str] = &[CAP_FILE_OPS, CAP_EXEC];
/// Capabilities that legitimately reach the network.
const NET_CAPABILITIES: &[&str] = &[CAP_WEB_SEARCH, CAP_BROWSE];

pub const DEFAULT_MAX_RUNTIME_MS: u64 = 60_000;
pub const DEFAULT_MAX_OUTPUT_BYTES: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivilegeGrants {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fs_jail_root: Option<String>,
    #[serde(default)]
    pub allow_exec: bool,
    #[serde(default)]
    pub allow_network: bool,
    #[serde(default)]
    pub network_allowlist: Vec<String>,
    #[serde(default = "default_max_runtime")]
    pub max_runtime_ms: u64,
    #[serde(default = "default_max_output")]
    pub max_output_bytes: u64,
}

fn default_max_runtime() -> u64 {
    DEFAULT_MAX_RUNTIME_MS
}

fn default_max_output() -> u64 {
    DEFAULT_MAX_OUTPUT_BYTES
}

impl Default for PrivilegeGrants {
    fn default() -> Self {
        PrivilegeGrants {
            fs_jail_root: None,
            allow_exec: false,
            allow_network: false,
            network_allowlist: Vec::new(),
            max_runtime_ms: DEFAULT_MAX_RUNTIME_MS,
            max_output_bytes: DEFAULT_MAX_OUTPUT_BYTES,
        }
    }
}

impl PrivilegeGrants {
    /// Whether `host` is reachable under these grants. Patterns are exact
    /// host names or `*.suffix` wildcards.
    pub fn permits_host(&self, host: &str) -> bool {
        self.allow_network
            && self.network_allowlist.iter().any(|pattern| match pattern.strip_prefix("*.") {
                Some(suffix) => host.len() > suffix.len() + 1 && host.ends_with(suffix) && host.as_bytes()[host.len() - suffix.len() - 1] == b'.',
                None => pattern.eq_ignore_ascii_case(host),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentManifest {
    pub id: String,
    pub display_name: String,
    pub capabilities: BTreeSet<Capability>,
    #[serde(default)]
    pub grants: PrivilegeGrants,
    #[serde(default)]
    pub heartbeat_capable: bool,
    #[serde(default)]
    pub description: String,
}

impl AgentManifest {
    pub fn new(id: &str, capabilities: &[&str]) -> Self {
        AgentManifest {
            id: id.into(),
            display_name: id.into(),
            capabilities: capabilities.iter().map(|c| Capability::new(c)).collect(),
            grants: PrivilegeGrants::default(),
            heartbeat_capable: false,
            description: String::new(),
        }
    }

    pub fn declares(&self, capability: &Capability) -> bool {
        self.capabilities.contains(capability)
    }

    fn declares_any(&self, tags: &[&str]) -> bool {
        tags.iter().any(|t| self.capabilities.iter().any(|c| c.as_str() == *t))
    }
}

/// One entry of the lint table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LintRule {
    /// Agent ids are 1..=64 chars of `[a-z0-9_-]`.
    MalformedId,
    NoCapabilities,
    /// `file_ops` without a jail root.
    FileOpsWithoutJail,
    /// `exec` capability without `allow_exec`.
    ExecCapabilityWithoutGrant,
    /// `exec` needs a jail to hold its working directory.
    ExecWithoutJail,
    /// `allow_exec` without the `exec` capability.
    ExecGrantWithoutCapability,
    /// `allow_network` without a capability that needs the network.
    NetworkGrantWithoutCapability,
    /// `allow_network` with an empty host allowlist.
    NetworkWithoutAllowlist,
    /// A host allowlist while the network is off.
    AllowlistWithoutNetwork,
    /// A jail root without any filesystem capability.
    JailWithoutFsCapability,
    ZeroRuntimeBudget,
    ZeroOutputBudget,
}

impl LintRule {
    pub const ALL: [LintRule; 12] = [
        LintRule::MalformedId,
        LintRule::NoCapabilities,
        LintRule::FileOpsWithoutJail,
        LintRule::ExecCapabilityWithoutGrant,
        LintRule::ExecWithoutJail,
        LintRule::ExecGrantWithoutCapability,
        LintRule::NetworkGrantWithoutCapability,
        LintRule::NetworkWithoutAllowlist,
        LintRule::AllowlistWithoutNetwork,
        LintRule::JailWithoutFsCapability,
        LintRule::ZeroRuntimeBudget,
        LintRule::ZeroOutputBudget,
    ];

    pub fn violated_by(self, m: &AgentManifest) -> bool {
        let g = &m.grants;
        match self {
            LintRule::MalformedId => !is_token(&m.id),
            LintRule::NoCapabilities => m.capabilities.is_empty(),
            LintRule::FileOpsWithoutJail => m.declares_any(&[CAP_FILE_OPS]) && g.fs_jail_root.is_none(),
            LintRule::ExecCapabilityWithoutGrant => m.declares_any(&[CAP_EXEC]) && !g.allow_exec,
            LintRule::ExecWithoutJail => m.declares_any(&[CAP_EXEC]) && g.fs_jail_root.is_none(),
            LintRule::ExecGrantWithoutCapability => g.allow_exec && !m.declares_any(&[CAP_EXEC]),
            LintRule::NetworkGrantWithoutCapability => g.allow_network && !m.declares_any(NET_CAPABILITIES),
            LintRule::NetworkWithoutAllowlist => g.allow_network && g.network_allowlist.is_empty(),
            LintRule::AllowlistWithoutNetwork => !g.allow_network && !g.network_allowlist.is_empty(),
            LintRule::JailWithoutFsCapability => g.fs_jail_root.is_some() && !m.declares_any(FS_CAPABILITIES),
            LintRule::ZeroRuntimeBudget => g.max_runtime_ms == 0,
            LintRule::ZeroOutputBudget => g.max_output_bytes == 0,
        }
    }
}

impl fmt::Display for LintRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LintRule::MalformedId => "agent id must be 1-64 chars of [a-z0-9_-]",
            LintRule::NoCapabilities => "manifest declares no capabilities",
            LintRule::FileOpsWithoutJail => "file_ops requires fs_jail_root",
            LintRule::ExecCapabilityWithoutGrant => "exec capability requires allow_exec",
            LintRule::ExecWithoutJail => "exec capability requires fs_jail_root",
            LintRule::ExecGrantWithoutCapability => "allow_exec granted without the exec capability",
            LintRule::NetworkGrantWithoutCapability => "allow_network granted without a network capability",
            LintRule::NetworkWithoutAllowlist => "allow_network requires a non-empty network_allowlist",
            LintRule::AllowlistWithoutNetwork => "network_allowlist set while allow_network is off",
            LintRule::JailWithoutFsCapability => "fs_jail_root set without a filesystem capability",
            LintRule::ZeroRuntimeBudget => "max_runtime_ms must be positive",
            LintRule::ZeroOutputBudget => "max_output_bytes must be positive",
        };
        f.write_str(s)
    }
}

pub fn is_token(s: &str) -> bool {
    !s.is_empty() && s.len() <= 64 && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

/// Every lint rule the manifest violates, in table order.
pub fn lint_manifest(manifest: &AgentManifest) -> Vec<LintRule> {
    LintRule::ALL.iter().copied().filter(|r| r.violated_by(manifest)).collect()
}
