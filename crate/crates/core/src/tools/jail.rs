use std::path::{Component, Path, PathBuf};

use crate::sandbox::LOGICAL_ROOT;

/// Confines tool paths to one directory tree.
///
/// Paths may be given relative to the root or absolute under the logical
/// root `/home/repo`. `..` components are refused outright, and resolved
/// paths are canonicalized so symlinks cannot lead outside.
#[derive(Debug, Clone)]
pub struct Jail {
    root: PathBuf,
}

impl Jail {
    pub fn new(root: &Path) -> std::io::Result<Self> {
        Ok(Jail {
            root: root.canonicalize()?,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Lexically maps `input` to a repo-relative path. The empty path is the root.
    pub fn relative(&self, input: &str) -> Result<PathBuf, String> {
        let trimmed = input.trim();
        let stripped = if trimmed == LOGICAL_ROOT {
            ""
        } else if let Some(rest) = trimmed.strip_prefix(&format!("{LOGICAL_ROOT}/")) {
            rest
        } else {
            trimmed
        };
        let path = Path::new(stripped);
        let mut rel = PathBuf::new();
        for c in path.components() {
            match c {
                Component::Normal(part) => rel.push(part),
                Component::CurDir => {}
                Component::ParentDir | Component::RootDir | Component::Prefix(_) => {
                    return Err(refusal(input));
                }
            }
        }
        Ok(rel)
    }

    /// Resolves an existing path, following symlinks, and checks containment.
    pub fn resolve_existing(&self, input: &str) -> Result<(PathBuf, PathBuf), String> {
        let rel = self.relative(input)?;
        let full = self.root.join(&rel);
        let real = full
            .canonicalize()
            .map_err(|_| format!("Path `{input}` does not exist."))?;
        if !real.starts_with(&self.root) {
            return Err(refusal(input));
        }
        Ok((rel, real))
    }

    /// Resolves a path that may not exist yet: its nearest existing ancestor
    /// must be inside the jail and the path itself must not be a symlink.
    pub fn resolve_new(&self, input: &str) -> Result<(PathBuf, PathBuf), String> {
        let rel = self.relative(input)?;
        if rel.as_os_str().is_empty() {
            return Err("A file path is required.".into());
        }
        let full = self.root.join(&rel);
        if std::fs::symlink_metadata(&full).is_ok_and(|m| m.file_type().is_symlink()) {
            return Err(refusal(input));
        }
        let mut probe = full.parent();
        while let Some(dir) = probe {
            if dir.exists() {
                let real = dir.canonicalize().map_err(|_| refusal(input))?;
                if !real.starts_with(&self.root) {
                    return Err(refusal(input));
                }
                return Ok((rel, full));
            }
            probe = dir.parent();
        }
        Err(refusal(input))
    }
}

fn refusal(input: &str) -> String {
    format!("Access denied: `{input}` is outside the repository ({LOGICAL_ROOT}). Only files inside the repository can be accessed.")
}
