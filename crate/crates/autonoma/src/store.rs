//! Flat-file persistence.
//!
//! ```text
//! <root>/conversations/<id>/meta.json
//!                          /messages.jsonl
//!                          /events.jsonl
//!                          /artifacts/
//!                          /screenshots/
//! <root>/audit/audit.jsonl
//! ```
//!
//! `meta.json` is the commit record: it carries the number of committed
//! lines in each JSONL file and is replaced atomically (temp file, fsync,
//! rename). Lines past the committed count are leftovers of an interrupted
//! append and are ignored by the loader and truncated by the next writer.
//!
//! A full rewrite stages all three files in `.staged/` and commits by
//! renaming that directory to `.commit/`. Any access to the conversation
//! first finishes a committed rewrite and drops an uncommitted one.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use autonoma_core::audit::{AuditEntry, AuditRecord};
use autonoma_core::{ArtifactRef, Message, WorkflowEvent};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MESSAGES_FILE: &str = "messages.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const META_FILE: &str = "meta.json";
pub const ARTIFACTS_DIR: &str = "artifacts";
pub const SCREENSHOTS_DIR: &str = "screenshots";
const STAGED_DIR: &str = ".staged";
const COMMIT_DIR: &str = ".commit";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("conversation `{0}` not found")]
    NotFound(String),
    #[error("malformed conversation id `{0}`")]
    InvalidId(String),
    #[error("{file} is corrupt at byte offset {offset}: {reason}")]
    Corrupt { file: PathBuf, offset: u64, reason: String },
    #[error("refusing to overwrite undecodable state at {0}")]
    CorruptExisting(PathBuf),
    #[error("storage is full")]
    StorageFull,
    #[error("audit chain head moved underneath the appender")]
    ChainHeadMismatch,
    #[error("invalid artifact name `{0}`")]
    InvalidArtifactName(String),
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::StorageFull {
            StoreError::StorageFull
        } else {
            StoreError::Io(e)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConversationRecord {
    pub id: String,
    pub title: String,
    pub created_at: u64,
    pub messages: String,
    pub events: String,
    pub artifacts: String,
    pub message_count: u64,
    pub event_count: u64,
}

impl ConversationRecord {
    pub fn new(id: impl Into<String>, title: impl Into<String>, created_at: u64) -> Self {
        ConversationRecord {
            id: id.into(),
            title: title.into(),
            created_at,
            messages: MESSAGES_FILE.into(),
            events: EVENTS_FILE.into(),
            artifacts: format!("{ARTIFACTS_DIR}/"),
            message_count: 0,
            event_count: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredPaths {
    pub dir: PathBuf,
    pub meta: PathBuf,
    pub messages: PathBuf,
    pub events: PathBuf,
    pub artifacts: PathBuf,
    pub screenshots: PathBuf,
}

impl StoredPaths {
    fn new(dir: PathBuf) -> Self {
        StoredPaths {
            meta: dir.join(META_FILE),
            messages: dir.join(MESSAGES_FILE),
            events: dir.join(EVENTS_FILE),
            artifacts: dir.join(ARTIFACTS_DIR),
            screenshots: dir.join(SCREENSHOTS_DIR),
            dir,
        }
    }
}

/// Called after a temp file is durable and before it is renamed into
/// place. Returning an error aborts the write at that point, exactly as a
/// crash would.
pub type RenameHook = Arc<dyn Fn(&Path) -> io::Result<()> + Send + Sync>;

/// Lowercase hyphenated UUID.
pub fn is_valid_conversation_id(id: &str) -> bool {
    id.len() == 36
        && id.bytes().enumerate().all(|(i, b)| match i {
            8 | 13 | 18 | 23 => b == b'-',
            _ => b.is_ascii_digit() || (b'a'..=b'f').contains(&b),
        })
}

pub fn new_conversation_id() -> String {
    uuid::Uuid::new_v4().hyphenated().to_string()
}

#[derive(Clone)]
pub struct Store {
    root: PathBuf,
    rename_hook: Option<RenameHook>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish()
    }
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("conversations"))?;
        fs::create_dir_all(root.join("audit"))?;
        Ok(Store { root, rename_hook: None })
    }

    pub fn with_rename_hook(mut self, hook: RenameHook) -> Self {
        self.rename_hook = Some(hook);
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn audit_path(&self) -> PathBuf {
        self.root.join("audit").join("audit.jsonl")
    }

    pub fn paths(&self, id: &str) -> Result<StoredPaths, StoreError> {
        if !is_valid_conversation_id(id) {
            return Err(StoreError::InvalidId(id.to_string()));
        }
        Ok(StoredPaths::new(self.root.join("conversations").join(id)))
    }

    pub fn exists(&self, id: &str) -> bool {
        self.paths(id).map(|p| self.recover(&p).is_ok() && p.meta.is_file()).unwrap_or(false)
    }

    /// Rolls a committed rewrite forward and discards an uncommitted one.
    fn recover(&self, paths: &StoredPaths) -> Result<(), StoreError> {
        let staged = paths.dir.join(STAGED_DIR);
        if staged.exists() {
            fs::remove_dir_all(&staged)?;
        }
        let commit = paths.dir.join(COMMIT_DIR);
        if !commit.exists() {
            return Ok(());
        }
        // meta.json goes last so a concurrent reader never sees new counts
        // over old data.
        for (name, dest) in [(MESSAGES_FILE, &paths.messages), (EVENTS_FILE, &paths.events), (META_FILE, &paths.meta)] {
            let src = commit.join(name);
            if src.exists() {
                self.rename(&src, dest)?;
            }
        }
        fs::remove_dir(&commit)?;
        sync_dir(&paths.dir);
        Ok(())
    }

    fn rename(&self, from: &Path, to: &Path) -> Result<(), StoreError> {
        if let Some(hook) = &self.rename_hook {
            hook(to)?;
        }
        fs::rename(from, to)?;
        Ok(())
    }

    /// Writes the full conversation, replacing any previous copy. The
    /// record's counts are taken from the slices.
    pub fn persist_conversation(
        &self,
        record: &ConversationRecord,
        messages: &[Message],
        events: &[WorkflowEvent],
    ) -> Result<StoredPaths, StoreError> {
        let paths = self.paths(&record.id)?;
        self.recover(&paths)?;
        if paths.meta.exists() {
            let raw = fs::read(&paths.meta)?;
            if serde_json::from_slice::<ConversationRecord>(&raw).is_err() {
                return Err(StoreError::CorruptExisting(paths.meta));
            }
        }
        fs::create_dir_all(&paths.artifacts)?;
        fs::create_dir_all(&paths.screenshots)?;

        let record = ConversationRecord {
            message_count: messages.len() as u64,
            event_count: events.len() as u64,
            ..record.clone()
        };
        let staged = paths.dir.join(STAGED_DIR);
        fs::create_dir(&staged)?;
        for (name, bytes) in [(MESSAGES_FILE, jsonl(messages)), (EVENTS_FILE, jsonl(events)), (META_FILE, meta_bytes(&record))] {
            let mut f = File::create(staged.join(name))?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        sync_dir(&staged);
        self.rename(&staged, &paths.dir.join(COMMIT_DIR))?;
        sync_dir(&paths.dir);
        self.recover(&paths)?;
        Ok(paths)
    }

    pub fn load_record(&self, id: &str) -> Result<ConversationRecord, StoreError> {
        let paths = self.paths(id)?;
        if paths.dir.exists() {
            self.recover(&paths)?;
        }
        let raw = match fs::read(&paths.meta) {
            Ok(r) => r,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::NotFound(id.to_string())),
            Err(e) => return Err(e.into()),
        };
        serde_json::from_slice(&raw).map_err(|e| StoreError::Corrupt {
            file: paths.meta.clone(),
            offset: 0,
            reason: e.to_string(),
        })
    }

    pub fn load_conversation(
        &self,
        id: &str,
    ) -> Result<(ConversationRecord, Vec<Message>, Vec<WorkflowEvent>), StoreError> {
        let record = self.load_record(id)?;
        let paths = self.paths(id)?;
        let messages: Vec<Message> = read_committed(&paths.messages, record.message_count)?.0;
        let (events, offsets) = read_committed::<WorkflowEvent>(&paths.events, record.event_count)?;
        for (i, e) in events.iter().enumerate() {
            if e.seq != i as u64 + 1 {
                return Err(StoreError::Corrupt {
                    file: paths.events.clone(),
                    offset: offsets[i],
                    reason: format!("sequence gap: expected seq {}, found {}", i + 1, e.seq),
                });
            }
        }
        Ok((record, messages, events))
    }

    pub fn list_conversations(&self) -> Result<Vec<ConversationRecord>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join("conversations"))? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if !is_valid_conversation_id(&name) {
                continue;
            }
            match self.load_record(&name) {
                Ok(r) => out.push(r),
                Err(StoreError::NotFound(_)) => {}
                Err(e) => return Err(e),
            }
        }
        out.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        Ok(out)
    }

    /// Starts a new, empty conversation on disk.
    pub fn create(&self, record: ConversationRecord) -> Result<ConversationWriter, StoreError> {
        let paths = self.persist_conversation(&record, &[], &[])?;
        let record = ConversationRecord { message_count: 0, event_count: 0, ..record };
        Ok(ConversationWriter { store: self.clone(), paths, record })
    }

    /// Reopens an existing conversation for appending, discarding any
    /// uncommitted trailing lines.
    pub fn writer(&self, id: &str) -> Result<ConversationWriter, StoreError> {
        let record = self.load_record(id)?;
        let paths = self.paths(id)?;
        truncate_to_lines(&paths.messages, record.message_count)?;
        truncate_to_lines(&paths.events, record.event_count)?;
        Ok(ConversationWriter { store: self.clone(), paths, record })
    }

    pub fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let tmp = path.with_file_name(format!(".{name}.tmp"));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        self.rename(&tmp, path)?;
        if let Some(parent) = path.parent() {
            sync_dir(parent);
        }
        Ok(())
    }
}

fn sync_dir(dir: &Path) {
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
}

fn meta_bytes(record: &ConversationRecord) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(record).expect("record serializes");
    out.push(b'\n');
    out
}

fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("value serializes");
        out.push(b'\n');
    }
    out
}

/// Parses the first `count` newline-terminated lines. Returns the values
/// and the byte offset of each line.
fn read_committed<T: DeserializeOwned>(path: &Path, count: u64) -> Result<(Vec<T>, Vec<u64>), StoreError> {
    let raw = match fs::read(path) {
        Ok(r) => r,
        Err(e) if e.kind() == io::ErrorKind::NotFound && count == 0 => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let mut values = Vec::with_capacity(count as usize);
    let mut offsets = Vec::with_capacity(count as usize);
    let mut offset = 0usize;
    for _ in 0..count {
        let rest = &raw[offset..];
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return Err(StoreError::Corrupt {
                file: path.to_path_buf(),
                offset: offset as u64,
                reason: "truncated line".into(),
            });
        };
        let value = serde_json::from_slice(&rest[..end]).map_err(|e| StoreError::Corrupt {
            file: path.to_path_buf(),
            offset: offset as u64,
            reason: e.to_string(),
        })?;
        values.push(value);
        offsets.push(offset as u64);
        offset += end + 1;
    }
    Ok((values, offsets))
}

fn truncate_to_lines(path: &Path, count: u64) -> Result<(), StoreError> {
    let raw = match fs::read(path) {
        Ok(r) => r,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            File::create(path)?;
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    let mut offset = 0usize;
    for _ in 0..count {
        match raw[offset..].iter().position(|&b| b == b'\n') {
            Some(end) => offset += end + 1,
            None => {
                return Err(StoreError::Corrupt {
                    file: path.to_path_buf(),
                    offset: offset as u64,
                    reason: "fewer lines than committed".into(),
                })
            }
        }
    }
    if offset < raw.len() {
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(offset as u64)?;
        f.sync_all()?;
    }
    Ok(())
}

/// Append handle for one conversation directory. One writer per
/// conversation.
#[derive(Debug)]
pub struct ConversationWriter {
    store: Store,
    paths: StoredPaths,
    record: ConversationRecord,
}

impl ConversationWriter {
    pub fn record(&self) -> &ConversationRecord {
        &self.record
    }

    pub fn paths(&self) -> &StoredPaths {
        &self.paths
    }

    pub fn append_message(&mut self, message: &Message) -> Result<(), StoreError> {
        append_line(&self.paths.messages, message)?;
        let mut next = self.record.clone();
        next.message_count += 1;
        self.commit(next)
    }

    pub fn append_event(&mut self, event: &WorkflowEvent) -> Result<(), StoreError> {
        if event.seq != self.record.event_count + 1 {
            return Err(StoreError::Corrupt {
                file: self.paths.events.clone(),
                offset: 0,
                reason: format!("append of seq {} after {}", event.seq, self.record.event_count),
            });
        }
        append_line(&self.paths.events, event)?;
        let mut next = self.record.clone();
        next.event_count += 1;
        self.commit(next)
    }

    pub fn set_title(&mut self, title: &str) -> Result<(), StoreError> {
        let mut next = self.record.clone();
        next.title = title.to_string();
        self.commit(next)
    }

    fn commit(&mut self, next: ConversationRecord) -> Result<(), StoreError> {
        self.store.write_atomic(&self.paths.meta, &meta_bytes(&next))?;
        self.record = next;
        Ok(())
    }

    /// Stores `bytes` under `artifacts/<name>` and returns its reference.
    pub fn write_artifact(&self, name: &str, bytes: &[u8]) -> Result<ArtifactRef, StoreError> {
        write_named(&self.store, &self.paths.artifacts, ARTIFACTS_DIR, name, bytes)
    }

    pub fn write_screenshot(&self, name: &str, bytes: &[u8]) -> Result<ArtifactRef, StoreError> {
        write_named(&self.store, &self.paths.screenshots, SCREENSHOTS_DIR, name, bytes)
    }
}

fn write_named(store: &Store, dir: &Path, prefix: &str, name: &str, bytes: &[u8]) -> Result<ArtifactRef, StoreError> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && name.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'));
    if !ok {
        return Err(StoreError::InvalidArtifactName(name.to_string()));
    }
    fs::create_dir_all(dir)?;
    store.write_atomic(&dir.join(name), bytes)?;
    Ok(ArtifactRef(format!("{prefix}/{name}")))
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut line = serde_json::to_vec(value).expect("value serializes");
    line.push(b'\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&line)?;
    f.sync_data()?;
    Ok(())
}

/// Process-wide serialized appender for the hash-chained audit log.
#[derive(Debug)]
pub struct AuditLog {
    path: PathBuf,
    inner: Mutex<AuditHead>,
}

#[derive(Debug)]
struct AuditHead {
    last: Option<AuditRecord>,
    len: u64,
}

impl AuditLog {
    /// Opens (or creates) the log and loads its head. The existing chain is
    /// not verified here; use [`autonoma_core::audit::verify_audit_log`].
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let raw = match fs::read(&path) {
            Ok(r) => r,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let mut last = None;
        let body = raw.strip_suffix(b"\n").unwrap_or(&raw);
        if !body.is_empty() {
            let start = body.iter().rposition(|&b| b == b'\n').map(|i| i + 1).unwrap_or(0);
            last = Some(serde_json::from_slice(&body[start..]).map_err(|e| StoreError::Corrupt {
                file: path.clone(),
                offset: start as u64,
                reason: e.to_string(),
            })?);
        }
        Ok(AuditLog { path, inner: Mutex::new(AuditHead { last, len: raw.len() as u64 }) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: AuditEntry) -> Result<AuditRecord, StoreError> {
        let mut head = self.inner.lock().expect("audit lock");
        let on_disk = match fs::metadata(&self.path) {
            Ok(m) => m.len(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => 0,
            Err(e) => return Err(e.into()),
        };
        if on_disk != head.len {
            return Err(StoreError::ChainHeadMismatch);
        }
        let record = AuditRecord::seal(head.last.as_ref(), entry);
        let mut line = record.to_line().into_bytes();
        line.push(b'\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(&line)?;
        f.sync_data()?;
        head.len += line.len() as u64;
        head.last = Some(record.clone());
        Ok(record)
    }

    pub fn len(&self) -> u64 {
        self.inner.lock().expect("audit lock").last.as_ref().map(|r| r.seq).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn read_all(&self) -> Result<String, StoreError> {
        match fs::read_to_string(&self.path) {
            Ok(s) => Ok(s),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(String::new()),
            Err(e) => Err(e.into()),
        }
    }
}
