//! Jailed file operations. Destructive operations need a single-use
//! approval token bound to the operation's digest.

use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use async_trait::async_trait;
use autonoma_core::canonical::digest_of;
use autonoma_core::manifest::CAP_FILE_OPS;
use autonoma_core::AgentManifest;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agentkit::{Agent, AgentContext, AgentError, AgentOutput, AgentTask, Jail, JailError, TokenError, TokenStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileOpKind {
    Copy,
    Move,
    Delete,
    Search,
    List,
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileOp {
    pub kind: FileOpKind,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dest: Option<String>,
    /// Body for `write`, pattern for `search`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
}

impl FileOp {
    pub fn new(kind: FileOpKind, path: &str) -> Self {
        FileOp { kind, path: path.into(), dest: None, content: None }
    }

    pub fn with_dest(mut self, dest: &str) -> Self {
        self.dest = Some(dest.into());
        self
    }

    pub fn with_content(mut self, content: &str) -> Self {
        self.content = Some(content.into());
        self
    }

    /// Digest the approval token is bound to.
    pub fn digest(&self) -> String {
        digest_of(self).expect("file ops serialize")
    }

    /// Whether the operation can lose data as things stand in `jail`:
    /// delete and move always, write and copy when the target exists.
    pub fn is_destructive(&self, jail: &Jail) -> bool {
        let target_exists = |p: Option<&String>| {
            p.and_then(|p| jail.resolve(p).ok()).map(|host| fs::symlink_metadata(host).is_ok()).unwrap_or(false)
        };
        match self.kind {
            FileOpKind::Delete | FileOpKind::Move => true,
            FileOpKind::Write => target_exists(Some(&self.path)),
            FileOpKind::Copy => target_exists(self.dest.as_ref()),
            FileOpKind::Search | FileOpKind::List | FileOpKind::Read => false,
        }
    }

    fn describe(&self) -> String {
        match &self.dest {
            Some(d) => format!("{:?} {} -> {}", self.kind, self.path, d).to_lowercase(),
            None => format!("{:?} {}", self.kind, self.path).to_lowercase(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FileOpResult {
    Done { path: String },
    Listing { entries: Vec<String> },
    Matches { paths: Vec<String> },
    Contents { text: String },
}

impl FileOpResult {
    pub fn summary(&self) -> String {
        match self {
            FileOpResult::Done { path } => format!("done: {path}"),
            FileOpResult::Listing { entries } => entries.join("\n"),
            FileOpResult::Matches { paths } => paths.join("\n"),
            FileOpResult::Contents { text } => text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FileOpError {
    #[error(transparent)]
    Jail(#[from] JailError),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("destructive operation needs approval (digest {digest})")]
    PendingApproval { digest: String },
    #[error("approval rejected: {0}")]
    ApprovalDenied(TokenError),
    #[error("missing argument: {0}")]
    MissingArgument(&'static str),
    #[error("io error: {0}")]
    Io(String),
}

fn io_err(path: &str) -> impl Fn(io::Error) -> FileOpError + '_ {
    move |e| {
        if e.kind() == io::ErrorKind::NotFound {
            FileOpError::NotFound(path.to_string())
        } else {
            FileOpError::Io(e.to_string())
        }
    }
}

/// Executes `op` inside `jail`. Every path is resolved before anything on
/// disk is touched, and a destructive op consumes `token` first.
pub fn execute_fileop(
    op: &FileOp,
    jail: &Jail,
    token: Option<&str>,
    tokens: &TokenStore,
    conversation_id: &str,
    now_ms: u64,
) -> Result<FileOpResult, FileOpError> {
    let src = jail.resolve(&op.path)?;
    let dest = match (&op.dest, op.kind) {
        (Some(d), _) => Some(jail.resolve(d)?),
        (None, FileOpKind::Copy | FileOpKind::Move) => return Err(FileOpError::MissingArgument("dest")),
        (None, _) => None,
    };

    if op.is_destructive(jail) {
        let digest = op.digest();
        let token = token.ok_or_else(|| FileOpError::PendingApproval { digest: digest.clone() })?;
        tokens.consume(token, conversation_id, &digest, now_ms).map_err(FileOpError::ApprovalDenied)?;
    }

    let done = || FileOpResult::Done { path: op.dest.clone().unwrap_or_else(|| op.path.clone()) };
    match op.kind {
        FileOpKind::Read => {
            let bytes = fs::read(&src).map_err(io_err(&op.path))?;
            Ok(FileOpResult::Contents { text: String::from_utf8_lossy(&bytes).into_owned() })
        }
        FileOpKind::Write => {
            let body = op.content.as_deref().ok_or(FileOpError::MissingArgument("content"))?;
            if let Some(parent) = src.parent() {
                fs::create_dir_all(parent).map_err(io_err(&op.path))?;
            }
            fs::write(&src, body).map_err(io_err(&op.path))?;
            Ok(done())
        }
        FileOpKind::Delete => {
            let meta = fs::symlink_metadata(&src).map_err(io_err(&op.path))?;
            if meta.is_dir() {
                fs::remove_dir_all(&src).map_err(io_err(&op.path))?;
            } else {
                fs::remove_file(&src).map_err(io_err(&op.path))?;
            }
            Ok(done())
        }
        FileOpKind::Copy => {
            let dest = dest.expect("checked above");
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent).map_err(io_err(&op.path))?;
            }
            fs::copy(&src, &dest).map_err(io_err(&op.path))?;
            Ok(done())
        }
        FileOpKind::Move => {
            let dest = dest.expect("checked above");
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent).map_err(io_err(&op.path))?;
            }
            fs::rename(&src, &dest).map_err(io_err(&op.path))?;
            Ok(done())
        }
        FileOpKind::List => {
            let mut entries = Vec::new();
            for entry in fs::read_dir(&src).map_err(io_err(&op.path))? {
                let entry = entry.map_err(io_err(&op.path))?;
                let mut name = entry.file_name().to_string_lossy().into_owned();
                if entry.file_type().map(|t| t.is_dir()).unwrap_or(false) {
                    name.push('/');
                }
                entries.push(name);
            }
            entries.sort();
            Ok(FileOpResult::Listing { entries })
        }
        FileOpKind::Search => {
            let needle = op.content.as_deref().ok_or(FileOpError::MissingArgument("content"))?.to_lowercase();
            if !src.is_dir() {
                return Err(FileOpError::NotFound(op.path.clone()));
            }
            let mut paths = Vec::new();
            walk(&src, &mut |p| {
                let name = p.file_name().map(|n| n.to_string_lossy().to_lowercase()).unwrap_or_default();
                if name.contains(&needle) {
                    if let Some(rel) = jail.relative(p) {
                        paths.push(rel);
                    }
                }
            })
            .map_err(|e| FileOpError::Io(e.to_string()))?;
            paths.sort();
            Ok(FileOpResult::Matches { paths })
        }
    }
}

// Symlinks are reported but never followed.
fn walk(dir: &Path, visit: &mut dyn FnMut(&Path)) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        visit(&path);
        if entry.file_type()?.is_dir() {
            walk(&path, visit)?;
        }
    }
    Ok(())
}

/// Parses a task description into an operation. Accepts a JSON `FileOp` or
/// one of:
///
/// ```text
/// list <path>        read <path>        delete <path>
/// write <path> <content...>
/// copy <src> <dest>  move <src> <dest>
/// search <dir> <name-fragment>
/// ```
pub fn parse_command(description: &str) -> Result<FileOp, String> {
    let text = description.trim();
    if text.starts_with('{') {
        return serde_json::from_str(text).map_err(|e| format!("invalid file op: {e}"));
    }
    let (verb, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
    let rest = rest.trim();
    let mut args = rest.splitn(2, char::is_whitespace);
    let first = args.next().filter(|s| !s.is_empty());
    let second = args.next().map(str::trim).filter(|s| !s.is_empty());
    let kind = match verb.to_ascii_lowercase().as_str() {
        "list" | "ls" => FileOpKind::List,
        "read" | "cat" => FileOpKind::Read,
        "delete" | "rm" => FileOpKind::Delete,
        "write" => FileOpKind::Write,
        "copy" | "cp" => FileOpKind::Copy,
        "move" | "mv" => FileOpKind::Move,
        "search" | "find" => FileOpKind::Search,
        other => return Err(format!("unknown file operation `{other}`")),
    };
    let path = match (kind, first) {
        (FileOpKind::List, None) => ".",
        (_, Some(p)) => p,
        (_, None) => return Err("missing path".into()),
    };
    let op = FileOp::new(kind, path);
    Ok(match kind {
        FileOpKind::Copy | FileOpKind::Move => op.with_dest(second.ok_or("missing destination")?),
        FileOpKind::Write => op.with_content(second.unwrap_or("")),
        FileOpKind::Search => op.with_content(second.ok_or("missing search pattern")?),
        _ => op,
    })
}

pub struct FileManagerAgent {
    manifest: AgentManifest,
    tokens: Arc<TokenStore>,
    serial: tokio::sync::Mutex<()>,
}

impl FileManagerAgent {
    /// `tokens` must be the store the approval gate issues from.
    pub fn new(jail_root: impl Into<String>, tokens: Arc<TokenStore>) -> Self {
        let mut manifest = AgentManifest::new("file_manager", &[CAP_FILE_OPS]);
        manifest.display_name = "File Manager".into();
        manifest.heartbeat_capable = true;
        manifest.description = "Lists, reads, writes, copies, moves, deletes and searches files in its jail.".into();
        manifest.grants.fs_jail_root = Some(jail_root.into());
        FileManagerAgent { manifest, tokens, serial: tokio::sync::Mutex::new(()) }
    }

    pub fn with_manifest(manifest: AgentManifest, tokens: Arc<TokenStore>) -> Self {
        FileManagerAgent { manifest, tokens, serial: tokio::sync::Mutex::new(()) }
    }
}

fn to_agent_error(e: FileOpError) -> AgentError {
    match e {
        FileOpError::Jail(j) => AgentError::PrivilegeViolation(j.to_string()),
        FileOpError::ApprovalDenied(_) | FileOpError::PendingApproval { .. } => AgentError::ApprovalDenied,
        other => AgentError::Failed(other.to_string()),
    }
}

#[async_trait]
impl Agent for FileManagerAgent {
    fn manifest(&self) -> &AgentManifest {
        &self.manifest
    }

    async fn run(&self, task: AgentTask, ctx: AgentContext) -> Result<AgentOutput, AgentError> {
        let root = ctx
            .grants()
            .fs_jail_root
            .clone()
            .ok_or_else(|| AgentError::PrivilegeViolation("no filesystem jail granted".into()))?;
        let jail = Jail::new(&root).map_err(|e| AgentError::failed(format!("jail unavailable: {e}")))?;
        let op = parse_command(&task.description).map_err(AgentError::Failed)?;
        // Resolve up front so escapes fail before any approval prompt.
        jail.resolve(&op.path).map_err(|e| to_agent_error(e.into()))?;
        if let Some(d) = &op.dest {
            jail.resolve(d).map_err(|e| to_agent_error(e.into()))?;
        }
        ctx.heartbeat();
        let token = if op.is_destructive(&jail) {
            let t = ctx.request_approval(&task.step_id, &op.describe(), &op.digest()).await?;
            Some(t.value)
        } else {
            None
        };
        let _serial = self.serial.lock().await;
        let result = execute_fileop(&op, &jail, token.as_deref(), &self.tokens, &task.conversation_id, ctx.clock.now_ms())
            .map_err(to_agent_error)?;
        Ok(AgentOutput::text(result.summary()))
    }
}
