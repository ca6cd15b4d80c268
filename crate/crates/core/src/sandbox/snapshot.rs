use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

use crate::error::{Error, IoContext, Result};
use crate::patch::{self, ApplyReport, DirTarget, MemTree, Patch};

/// Logical repository root shown to agents and used to redact runner output.
pub const LOGICAL_ROOT: &str = "/home/repo";

/// Files of `root` that count as repository content: everything except the
/// `.git` directory and paths excluded by `.gitignore` / `.ignore` files.
/// Sorted, repo-relative.
pub fn tracked_files(root: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let walker = ignore::WalkBuilder::new(root)
        .hidden(false)
        .parents(false)
        .git_global(false)
        .git_exclude(false)
        .require_git(false)
        .follow_links(false)
        .filter_entry(|e| e.file_name() != ".git")
        .build();
    for entry in walker {
        let entry = entry.map_err(|e| Error::Sandbox(format!("walking {}: {e}", root.display())))?;
        let Some(kind) = entry.file_type() else { continue };
        if kind.is_dir() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .map_err(|_| Error::Sandbox("walker left the root".into()))?;
        files.push(rel.to_path_buf());
    }
    files.sort();
    Ok(files)
}

/// Content hash over the tracked files of `root`: path, kind and bytes of each
/// file, in path order.
pub fn tree_hash(root: &Path) -> Result<String> {
    let files = tracked_files(root)?;
    hash_files(root, &files)
}

fn hash_files(root: &Path, files: &[PathBuf]) -> Result<String> {
    let mut hasher = Sha256::new();
    for rel in files {
        let full = root.join(rel);
        let meta = std::fs::symlink_metadata(&full).at(&full)?;
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0]);
        if meta.file_type().is_symlink() {
            hasher.update(b"L");
            let target = std::fs::read_link(&full).at(&full)?;
            hasher.update(target.to_string_lossy().as_bytes());
        } else {
            hasher.update(b"F");
            let bytes = std::fs::read(&full).at(&full)?;
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
        hasher.update([0]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn copy_tree(from: &Path, to: &Path, files: &[PathBuf]) -> Result<()> {
    for rel in files {
        let src = from.join(rel);
        let dst = to.join(rel);
        if let Some(parent) = dst.parent() {
            std::fs::create_dir_all(parent).at(parent)?;
        }
        let meta = std::fs::symlink_metadata(&src).at(&src)?;
        if meta.file_type().is_symlink() {
            let target = std::fs::read_link(&src).at(&src)?;
            std::os::unix::fs::symlink(&target, &dst).at(&dst)?;
        } else {
            std::fs::copy(&src, &dst).at(&dst)?;
        }
    }
    Ok(())
}

fn read_tree(root: &Path, files: &[PathBuf]) -> Result<MemTree> {
    let mut tree = MemTree::new();
    for rel in files {
        let full = root.join(rel);
        if std::fs::symlink_metadata(&full).at(&full)?.file_type().is_symlink() {
            continue;
        }
        tree.insert(rel.clone(), std::fs::read(&full).at(&full)?);
    }
    Ok(tree)
}

/// Immutable copy of the initial repository state.
///
/// The tracked files are copied into a private directory at capture time, so
/// later changes to the source directory do not affect the snapshot.
#[derive(Debug)]
pub struct Snapshot {
    store: TempDir,
    tracked_files: Vec<PathBuf>,
    tree_hash: String,
}

impl Snapshot {
    pub fn capture(source: &Path) -> Result<Self> {
        if !source.is_dir() {
            return Err(Error::Sandbox(format!("{} is not a directory", source.display())));
        }
        let files = tracked_files(source)?;
        let store = tempfile::Builder::new()
            .prefix("snapshot-")
            .tempdir()
            .map_err(|e| Error::Sandbox(format!("cannot create snapshot store: {e}")))?;
        copy_tree(source, store.path(), &files)?;
        let tree_hash = hash_files(store.path(), &files)?;
        Ok(Snapshot {
            store,
            tracked_files: files,
            tree_hash,
        })
    }

    pub fn root(&self) -> &Path {
        self.store.path()
    }

    pub fn tree_hash(&self) -> &str {
        &self.tree_hash
    }

    pub fn tracked_files(&self) -> &[PathBuf] {
        &self.tracked_files
    }

    pub fn read_tree(&self) -> Result<MemTree> {
        read_tree(self.root(), &self.tracked_files)
    }

    /// Materializes an isolated working copy, optionally with `patch` applied.
    pub fn checkout(&self, patch: Option<&Patch>, max_fuzz: usize) -> Result<WorkingCopy> {
        let dir = tempfile::Builder::new()
            .prefix("workcopy-")
            .tempdir()
            .map_err(|e| Error::Sandbox(format!("cannot create working copy: {e}")))?;
        copy_tree(self.root(), dir.path(), &self.tracked_files)?;
        let mut copy = WorkingCopy { dir };
        if let Some(patch) = patch {
            let report = copy.apply(patch, max_fuzz)?;
            if !report.is_applied() {
                return Err(Error::PatchApply(report.render()));
            }
        }
        Ok(copy)
    }

    /// Unified diff taking the snapshot to the working copy's tracked state.
    pub fn diff_against(&self, copy: &WorkingCopy) -> Result<String> {
        Ok(patch::diff_trees(&self.read_tree()?, &copy.read_tree()?))
    }
}

/// Disposable materialization of a snapshot. Removed on drop.
#[derive(Debug)]
pub struct WorkingCopy {
    dir: TempDir,
}

impl WorkingCopy {
    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn tree_hash(&self) -> Result<String> {
        tree_hash(self.root())
    }

    pub fn read_tree(&self) -> Result<MemTree> {
        let files = tracked_files(self.root())?;
        read_tree(self.root(), &files)
    }

    pub fn apply(&mut self, patch: &Patch, max_fuzz: usize) -> Result<ApplyReport> {
        let mut target = DirTarget::new(self.root()).at(self.root())?;
        Ok(patch::apply(&mut target, patch, max_fuzz))
    }

    /// Replaces occurrences of the copy's physical path with [`LOGICAL_ROOT`].
    pub fn redact(&self, text: &str) -> String {
        redact_root(text, self.root())
    }
}

pub fn redact_root(text: &str, root: &Path) -> String {
    let mut out = text.to_string();
    let mut variants = vec![root.to_string_lossy().into_owned()];
    if let Ok(real) = root.canonicalize() {
        variants.push(real.to_string_lossy().into_owned());
    }
    variants.sort_by_key(|v| std::cmp::Reverse(v.len()));
    for v in variants {
        if !v.is_empty() {
            out = out.replace(&v, LOGICAL_ROOT);
        }
    }
    out
}
