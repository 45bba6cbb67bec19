//! Application-level filesystem jail. All paths at the interface are
//! jail-relative with `/` separators.

use std::fs;
use std::io;
use std::path::{Component, Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JailError {
    #[error("path `{0}` escapes the jail")]
    Escape(String),
    #[error("invalid path `{0}`")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Jail {
    root: PathBuf,
}

impl Jail {
    /// Creates the root if needed. The stored root is canonical.
    pub fn new(root: impl AsRef<Path>) -> io::Result<Self> {
        fs::create_dir_all(root.as_ref())?;
        Ok(Jail { root: fs::canonicalize(root.as_ref())? })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Maps a jail-relative path to a host path inside the jail.
    ///
    /// Rejects absolute and drive-prefixed paths, `..` that climbs above the
    /// root, and any existing symlink along the way that resolves outside.
    pub fn resolve(&self, rel: &str) -> Result<PathBuf, JailError> {
        if rel.is_empty() || rel.contains('\0') {
            return Err(JailError::Invalid(rel.to_string()));
        }
        let normalized = rel.replace('\\', "/");
        let bytes = normalized.as_bytes();
        if normalized.starts_with('/') || (bytes.len() >= 2 && bytes[0].is_ascii_alphabetic() && bytes[1] == b':') {
            return Err(JailError::Escape(rel.to_string()));
        }
        let mut parts: Vec<&str> = Vec::new();
        for piece in normalized.split('/') {
            match piece {
                "" | "." => {}
                ".." => {
                    if parts.pop().is_none() {
                        return Err(JailError::Escape(rel.to_string()));
                    }
                }
                p => parts.push(p),
            }
        }

        let mut current = self.root.clone();
        let mut exists = true;
        for part in parts {
            // Each part is a single normal component at this point.
            if Path::new(part).components().any(|c| !matches!(c, Component::Normal(_))) {
                return Err(JailError::Escape(rel.to_string()));
            }
            current.push(part);
            if !exists {
                continue;
            }
            match fs::symlink_metadata(&current) {
                Ok(meta) if meta.file_type().is_symlink() => {
                    let target = fs::canonicalize(&current).map_err(|_| JailError::Escape(rel.to_string()))?;
                    if !target.starts_with(&self.root) {
                        return Err(JailError::Escape(rel.to_string()));
                    }
                    current = target;
                }
                Ok(_) => {}
                Err(_) => exists = false,
            }
        }
        if !current.starts_with(&self.root) {
            return Err(JailError::Escape(rel.to_string()));
        }
        Ok(current)
    }

    /// Jail-relative form of a host path inside the jail.
    pub fn relative(&self, host: &Path) -> Option<String> {
        let rel = host.strip_prefix(&self.root).ok()?;
        let s = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        Some(if s.is_empty() { ".".into() } else { s })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn traversal_and_absolute_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let jail = Jail::new(dir.path().join("jail")).unwrap();
        assert!(matches!(jail.resolve("../../etc/anything"), Err(JailError::Escape(_))));
        assert!(matches!(jail.resolve("/etc/passwd"), Err(JailError::Escape(_))));
        assert!(matches!(jail.resolve("C:\\Windows"), Err(JailError::Escape(_))));
        assert!(matches!(jail.resolve("a/..\\..\\b"), Err(JailError::Escape(_))));
        assert_eq!(jail.resolve("a/../b").unwrap(), jail.root().join("b"));
        assert_eq!(jail.resolve(".").unwrap(), jail.root());
    }

    #[cfg(unix)]
    #[test]
    fn symlink_out_of_jail_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let jail = Jail::new(dir.path().join("jail")).unwrap();
        std::os::unix::fs::symlink(dir.path(), jail.root().join("out")).unwrap();
        std::os::unix::fs::symlink(jail.root().join("sub"), jail.root().join("in")).unwrap();
        fs::create_dir(jail.root().join("sub")).unwrap();
        assert!(matches!(jail.resolve("out/x"), Err(JailError::Escape(_))));
        assert_eq!(jail.resolve("in/x").unwrap(), jail.root().join("sub").join("x"));
    }
}
