use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{FileChange, FilePatch, Hunk, Patch};

/// Text file split into lines, remembering its line-ending style.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextFile {
    pub lines: Vec<String>,
    pub trailing_newline: bool,
    pub crlf: bool,
}

impl TextFile {
    pub fn parse(text: &str) -> Self {
        let crlf = text.contains("\r\n") && !text.replace("\r\n", "").contains('\n');
        let normalized = if crlf {
            text.replace("\r\n", "\n")
        } else {
            text.to_string()
        };
        let trailing_newline = normalized.ends_with('\n');
        let body = normalized.strip_suffix('\n').unwrap_or(&normalized);
        let lines = if normalized.is_empty() {
            Vec::new()
        } else {
            body.split('\n').map(String::from).collect()
        };
        TextFile {
            lines,
            trailing_newline,
            crlf,
        }
    }

    pub fn render(&self) -> String {
        if self.lines.is_empty() {
            return String::new();
        }
        let eol = if self.crlf { "\r\n" } else { "\n" };
        let mut out = self.lines.join(eol);
        if self.trailing_newline {
            out.push_str(eol);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplyStatus {
    Applied,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchReason {
    /// The old-side lines were not found within the fuzz window.
    ContextMismatch,
    /// Two placements at the same distance matched.
    Ambiguous,
    /// The hunk would overlap the previous hunk's placement.
    Collision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NearestMatch {
    /// 1-based line where the best partial match starts.
    pub line: usize,
    pub agreeing: usize,
    pub found: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HunkMismatch {
    pub reason: MismatchReason,
    pub expected_line: Option<usize>,
    pub expected: Vec<String>,
    pub nearest: Option<NearestMatch>,
    /// 1-based lines where the full old side matches outside the fuzz window.
    pub candidates: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum HunkReport {
    Applied { line: usize, fuzz: usize },
    Failed(HunkMismatch),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileReport {
    pub path: PathBuf,
    pub hunks: Vec<HunkReport>,
    /// File-level failure (missing target, existing target on create, unreadable).
    pub error: Option<String>,
}

impl FileReport {
    fn is_ok(&self) -> bool {
        self.error.is_none() && self.hunks.iter().all(|h| matches!(h, HunkReport::Applied { .. }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApplyReport {
    pub status: ApplyStatus,
    pub files: Vec<FileReport>,
}

impl ApplyReport {
    pub fn is_applied(&self) -> bool {
        self.status == ApplyStatus::Applied
    }

    /// Largest positional fuzz used by any hunk.
    pub fn max_fuzz_used(&self) -> usize {
        self.files
            .iter()
            .flat_map(|f| &f.hunks)
            .filter_map(|h| match h {
                HunkReport::Applied { fuzz, .. } => Some(*fuzz),
                HunkReport::Failed(_) => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Plain-text diagnostics for agent consumption. Deterministic.
    pub fn render(&self) -> String {
        let mut out = String::new();
        match self.status {
            ApplyStatus::Applied => {
                let _ = writeln!(out, "Patch applied.");
            }
            ApplyStatus::Failed => {
                let _ = writeln!(out, "Patch failed to apply. No files were changed.");
            }
        }
        for file in &self.files {
            if let Some(err) = &file.error {
                let _ = writeln!(out, "{}: {err}", file.path.display());
            }
            for (i, hunk) in file.hunks.iter().enumerate() {
                match hunk {
                    HunkReport::Applied { line, fuzz } => {
                        let _ = writeln!(
                            out,
                            "{} hunk #{}: applied at line {line} (offset {fuzz})",
                            file.path.display(),
                            i + 1
                        );
                    }
                    HunkReport::Failed(m) => render_mismatch(&mut out, &file.path, i + 1, m),
                }
            }
        }
        out
    }
}

fn render_mismatch(out: &mut String, path: &Path, number: usize, m: &HunkMismatch) {
    let why = match m.reason {
        MismatchReason::ContextMismatch => "context lines not found",
        MismatchReason::Ambiguous => "ambiguous placement, two equally close matches",
        MismatchReason::Collision => "overlaps the previous hunk",
    };
    let _ = writeln!(out, "{} hunk #{number}: FAILED ({why})", path.display());
    match m.expected_line {
        Some(line) => {
            let _ = writeln!(out, "  expected at line {line}:");
        }
        None => {
            let _ = writeln!(out, "  expected (no line number given):");
        }
    }
    for l in &m.expected {
        let _ = writeln!(out, "    | {l}");
    }
    if let Some(near) = &m.nearest {
        let _ = writeln!(
            out,
            "  nearest match at line {} ({}/{} lines agree):",
            near.line,
            near.agreeing,
            m.expected.len()
        );
        for l in &near.found {
            let _ = writeln!(out, "    | {l}");
        }
    }
    if !m.candidates.is_empty() {
        let list: Vec<String> = m.candidates.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(
            out,
            "  exact matches outside the allowed offset at lines: {}",
            list.join(", ")
        );
    }
}

/// Where a patch is applied: a directory, or an in-memory tree in tests.
pub trait PatchTarget {
    fn read(&self, path: &Path) -> io::Result<Option<Vec<u8>>>;
    fn write(&mut self, path: &Path, bytes: &[u8]) -> io::Result<()>;
    fn remove(&mut self, path: &Path) -> io::Result<()>;
}

pub type MemTree = BTreeMap<PathBuf, Vec<u8>>;

impl PatchTarget for MemTree {
    fn read(&self, path: &Path) -> io::Result<Option<Vec<u8>>> {
        Ok(self.get(path).cloned())
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> io::Result<()> {
        self.insert(path.to_path_buf(), bytes.to_vec());
        Ok(())
    }

    fn remove(&mut self, path: &Path) -> io::Result<()> {
        BTreeMap::remove(self, path);
        Ok(())
    }
}

/// A directory target. Refuses to touch anything resolving outside `root`.
#[derive(Debug, Clone)]
pub struct DirTarget {
    root: PathBuf,
}

impl DirTarget {
    pub fn new(root: impl Into<PathBuf>) -> io::Result<Self> {
        Ok(DirTarget {
            root: root.into().canonicalize()?,
        })
    }

    fn resolve(&self, path: &Path) -> io::Result<PathBuf> {
        let full = self.root.join(path);
        // Walk up to the deepest existing ancestor and make sure it stays in the root.
        let mut probe = full.as_path();
        loop {
            if probe.exists() || probe.symlink_metadata().is_ok() {
                let real = probe.canonicalize()?;
                if !real.starts_with(&self.root) {
                    return Err(io::Error::new(
                        io::ErrorKind::PermissionDenied,
                        format!("{} resolves outside the repository", path.display()),
                    ));
                }
                return Ok(full);
            }
            match probe.parent() {
                Some(parent) => probe = parent,
                None => return Ok(full),
            }
        }
    }
}

impl PatchTarget for DirTarget {
    fn read(&self, path: &Path) -> io::Result<Option<Vec<u8>>> {
        let full = self.resolve(path)?;
        match std::fs::read(&full) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> io::Result<()> {
        let full = self.resolve(path)?;
        if let Some(parent) = full.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(full, bytes)
    }

    fn remove(&mut self, path: &Path) -> io::Result<()> {
        let full = self.resolve(path)?;
        std::fs::remove_file(full)
    }
}

/// Applies `patch` to `target`, all or nothing.
///
/// Every hunk is placed first; files are only written once all placements
/// succeed. A hunk is placed at its header position when the old-side lines
/// match there, otherwise at the nearest matching position within `max_fuzz`
/// lines. Two matches at the same distance fail as ambiguous.
pub fn apply(target: &mut dyn PatchTarget, patch: &Patch, max_fuzz: usize) -> ApplyReport {
    let mut reports = Vec::with_capacity(patch.files.len());
    let mut writes: Vec<PlannedWrite> = Vec::new();
    for file in &patch.files {
        let (report, planned) = plan_file(&*target, file, max_fuzz);
        writes.extend(planned);
        reports.push(report);
    }
    if !reports.iter().all(FileReport::is_ok) {
        return ApplyReport {
            status: ApplyStatus::Failed,
            files: reports,
        };
    }
    for (i, w) in writes.iter().enumerate() {
        let result = match &w.new {
            Some(bytes) => target.write(&w.path, bytes),
            None => target.remove(&w.path),
        };
        if let Err(e) = result {
            for done in writes[..i].iter().rev() {
                let restored = match &done.original {
                    Some(bytes) => target.write(&done.path, bytes),
                    None => target.remove(&done.path),
                };
                if let Err(err) = restored {
                    tracing::error!(path = %done.path.display(), %err, "rollback failed");
                }
            }
            if let Some(report) = reports.iter_mut().find(|r| r.path == w.path) {
                report.error = Some(format!("write failed: {e}"));
            }
            return ApplyReport {
                status: ApplyStatus::Failed,
                files: reports,
            };
        }
    }
    ApplyReport {
        status: ApplyStatus::Applied,
        files: reports,
    }
}

struct PlannedWrite {
    path: PathBuf,
    original: Option<Vec<u8>>,
    /// `None` deletes the file.
    new: Option<Vec<u8>>,
}

/// Plans one file: the report plus, on success, the write to perform.
fn plan_file(target: &dyn PatchTarget, file: &FilePatch, max_fuzz: usize) -> (FileReport, Option<PlannedWrite>) {
    let mut report = FileReport {
        path: file.path.clone(),
        hunks: Vec::new(),
        error: None,
    };
    let existing = match target.read(&file.path) {
        Ok(content) => content,
        Err(e) => {
            report.error = Some(format!("cannot read target: {e}"));
            return (report, None);
        }
    };
    let original = match (&file.change, &existing) {
        (FileChange::Create, Some(_)) => {
            report.error = Some("target file already exists".into());
            return (report, None);
        }
        (FileChange::Create, None) => String::new(),
        (_, None) => {
            report.error = Some("target file missing".into());
            return (report, None);
        }
        (_, Some(bytes)) => match std::str::from_utf8(bytes) {
            Ok(text) => text.to_string(),
            Err(_) => {
                report.error = Some("target file is not UTF-8 text".into());
                return (report, None);
            }
        },
    };
    let (result, hunks) = apply_to_text(&original, &file.hunks, max_fuzz);
    report.hunks = hunks;
    let Some(text) = result else {
        return (report, None);
    };
    let new = match file.change {
        FileChange::Delete if !text.is_empty() => {
            report.error = Some("deletion hunks do not cover the whole file".into());
            return (report, None);
        }
        FileChange::Delete => None,
        _ => Some(text.into_bytes()),
    };
    let write = PlannedWrite {
        path: file.path.clone(),
        original: existing,
        new,
    };
    (report, Some(write))
}

/// Places and splices `hunks` into `original`. Returns the new text when every
/// hunk placed, plus a per-hunk report.
pub fn apply_to_text(original: &str, hunks: &[Hunk], max_fuzz: usize) -> (Option<String>, Vec<HunkReport>) {
    let mut file = TextFile::parse(original);
    let mut reports = Vec::with_capacity(hunks.len());
    let mut placements: Vec<(usize, &Hunk)> = Vec::new();
    let mut prev_end = 0usize;
    let mut failed = false;
    for hunk in hunks {
        match place(&file, hunk, prev_end, max_fuzz) {
            Ok((pos, fuzz)) => {
                prev_end = pos + hunk.old_len();
                placements.push((pos, hunk));
                reports.push(HunkReport::Applied { line: pos + 1, fuzz });
            }
            Err(mismatch) => {
                failed = true;
                reports.push(HunkReport::Failed(mismatch));
            }
        }
    }
    if failed {
        return (None, reports);
    }
    for (pos, hunk) in placements.iter().rev() {
        let old_len = hunk.old_len();
        let was_empty = file.lines.is_empty();
        let at_eof = pos + old_len == file.lines.len();
        let replacement: Vec<String> = hunk.new_lines().into_iter().map(String::from).collect();
        file.lines.splice(*pos..pos + old_len, replacement);
        if at_eof {
            if hunk.new_no_eol {
                file.trailing_newline = false;
            } else if hunk.old_no_eol || was_empty {
                file.trailing_newline = true;
            }
        }
    }
    (Some(file.render()), reports)
}

fn expected_index(hunk: &Hunk) -> Option<usize> {
    hunk.anchor_line.map(|start| {
        if hunk.old_len() == 0 {
            start
        } else {
            start.saturating_sub(1)
        }
    })
}

fn matches_at(file: &TextFile, old: &[&str], pos: usize, old_no_eol: bool) -> bool {
    if pos + old.len() > file.lines.len() {
        return false;
    }
    if old_no_eol && (pos + old.len() != file.lines.len() || file.trailing_newline) {
        return false;
    }
    file.lines[pos..pos + old.len()].iter().zip(old).all(|(a, b)| a == b)
}

fn place(file: &TextFile, hunk: &Hunk, prev_end: usize, max_fuzz: usize) -> Result<(usize, usize), HunkMismatch> {
    let old = hunk.old_lines();
    let fits = |pos: usize| pos >= prev_end && matches_at(file, &old, pos, hunk.old_no_eol);
    match expected_index(hunk) {
        Some(expected) => {
            for distance in 0..=max_fuzz {
                let mut found: Vec<usize> = Vec::with_capacity(2);
                if let Some(before) = expected.checked_sub(distance) {
                    if fits(before) {
                        found.push(before);
                    }
                }
                let after = expected + distance;
                if distance > 0 && fits(after) {
                    found.push(after);
                }
                match found.len() {
                    0 => continue,
                    1 => return Ok((found[0], distance)),
                    _ => return Err(mismatch(file, hunk, MismatchReason::Ambiguous, prev_end, max_fuzz)),
                }
            }
            let reason = if expected < prev_end && matches_at(file, &old, expected, hunk.old_no_eol) {
                MismatchReason::Collision
            } else {
                MismatchReason::ContextMismatch
            };
            Err(mismatch(file, hunk, reason, prev_end, max_fuzz))
        }
        None => {
            if old.is_empty() {
                return if file.lines.is_empty() {
                    Ok((0, 0))
                } else {
                    Err(mismatch(file, hunk, MismatchReason::Ambiguous, prev_end, max_fuzz))
                };
            }
            let found: Vec<usize> = (prev_end..=file.lines.len().saturating_sub(old.len()))
                .filter(|&p| fits(p))
                .take(2)
                .collect();
            match found.len() {
                1 => Ok((found[0], 0)),
                0 => Err(mismatch(
                    file,
                    hunk,
                    MismatchReason::ContextMismatch,
                    prev_end,
                    max_fuzz,
                )),
                _ => Err(mismatch(file, hunk, MismatchReason::Ambiguous, prev_end, max_fuzz)),
            }
        }
    }
}

fn mismatch(file: &TextFile, hunk: &Hunk, reason: MismatchReason, prev_end: usize, max_fuzz: usize) -> HunkMismatch {
    let old = hunk.old_lines();
    let expected = expected_index(hunk);
    let mut nearest: Option<(usize, usize)> = None;
    if !old.is_empty() {
        let last = file.lines.len().saturating_sub(1);
        for pos in 0..=last {
            let agreeing = old
                .iter()
                .enumerate()
                .filter(|(i, l)| file.lines.get(pos + i).is_some_and(|f| f == *l))
                .count();
            if agreeing == 0 {
                continue;
            }
            let closer = |a: usize, b: usize| match expected {
                Some(e) => a.abs_diff(e) < b.abs_diff(e),
                None => false,
            };
            nearest = match nearest {
                Some((p, a)) if a > agreeing || (a == agreeing && !closer(pos, p)) => Some((p, a)),
                _ => Some((pos, agreeing)),
            };
        }
    }
    let candidates: Vec<usize> = if old.is_empty() {
        Vec::new()
    } else {
        (0..=file.lines.len().saturating_sub(old.len()))
            .filter(|&p| matches_at(file, &old, p, hunk.old_no_eol))
            .filter(|&p| match expected {
                Some(e) => p.abs_diff(e) > max_fuzz || p < prev_end,
                None => true,
            })
            .take(5)
            .map(|p| p + 1)
            .collect()
    };
    HunkMismatch {
        reason,
        expected_line: expected.map(|e| e + 1),
        expected: old.iter().map(|s| s.to_string()).collect(),
        nearest: nearest.map(|(pos, agreeing)| NearestMatch {
            line: pos + 1,
            agreeing,
            found: file.lines[pos..(pos + old.len()).min(file.lines.len())].to_vec(),
        }),
        candidates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patch::parse_patch;

    fn tree(files: &[(&str, &str)]) -> MemTree {
        files
            .iter()
            .map(|(p, c)| (PathBuf::from(p), c.as_bytes().to_vec()))
            .collect()
    }

    fn text(t: &MemTree, p: &str) -> String {
        String::from_utf8(t[Path::new(p)].clone()).unwrap()
    }

    const BASE: &str = "l1\nl2\nl3\nl4\nl5\nl6\nl7\nl8\n";

    #[test]
    fn exact_context_applies_with_zero_fuzz() {
        let mut t = tree(&[("f", BASE)]);
        let p = parse_patch("--- a/f\n+++ b/f\n@@ -3,3 +3,3 @@\n l3\n-l4\n+L4\n l5\n").unwrap();
        let r = apply(&mut t, &p, 2);
        assert!(r.is_applied());
        assert_eq!(r.files[0].hunks[0], HunkReport::Applied { line: 3, fuzz: 0 });
        assert_eq!(text(&t, "f"), "l1\nl2\nl3\nL4\nl5\nl6\nl7\nl8\n");
    }

    #[test]
    fn shifted_context_uses_fuzz() {
        let mut t = tree(&[("f", BASE)]);
        // Header claims line 1, content actually starts at line 3.
        let p = parse_patch("--- a/f\n+++ b/f\n@@ -1,3 +1,3 @@\n l3\n-l4\n+L4\n l5\n").unwrap();
        let r = apply(&mut t.clone(), &p, 1);
        assert!(!r.is_applied());
        let r = apply(&mut t, &p, 3);
        assert_eq!(r.files[0].hunks[0], HunkReport::Applied { line: 3, fuzz: 2 });
    }

    #[test]
    fn absent_lines_fail_with_nearest_anchor() {
        let mut t = tree(&[("f", BASE)]);
        let before = t.clone();
        let p = parse_patch("--- a/f\n+++ b/f\n@@ -3,3 +3,3 @@\n l3\n-zzz\n+L4\n l5\n").unwrap();
        let r = apply(&mut t, &p, 2);
        assert_eq!(r.status, ApplyStatus::Failed);
        assert_eq!(t, before);
        let HunkReport::Failed(m) = &r.files[0].hunks[0] else {
            panic!()
        };
        assert_eq!(m.reason, MismatchReason::ContextMismatch);
        let near = m.nearest.as_ref().unwrap();
        assert_eq!(near.line, 3);
        assert_eq!(near.agreeing, 2);
        let rendered = r.render();
        assert!(
            rendered.contains("nearest match at line 3 (2/3 lines agree)"),
            "{rendered}"
        );
        assert!(rendered.contains("| zzz"));
    }

    #[test]
    fn ambiguous_placement_fails() {
        let mut t = tree(&[("f", "a\nx\na\nx\na\n")]);
        // Expected at index 2 (line 3) with content "x": matches at 1 and 3, both distance 1.
        let p = parse_patch("--- a/f\n+++ b/f\n@@ -3 +3 @@\n-x\n+y\n").unwrap();
        let r = apply(&mut t, &p, 2);
        let HunkReport::Failed(m) = &r.files[0].hunks[0] else {
            panic!("{r:?}")
        };
        assert_eq!(m.reason, MismatchReason::Ambiguous);
    }

    #[test]
    fn multi_file_atomicity() {
        let mut t = tree(&[("a", "1\n2\n"), ("b", "3\n4\n")]);
        let before = t.clone();
        let p =
            parse_patch("--- a/a\n+++ b/a\n@@ -1 +1 @@\n-1\n+one\n--- a/b\n+++ b/b\n@@ -1 +1 @@\n-nope\n+x\n").unwrap();
        assert!(!apply(&mut t, &p, 2).is_applied());
        assert_eq!(t, before);
    }

    #[test]
    fn create_and_delete() {
        let mut t = tree(&[("old", "x\n")]);
        let p = parse_patch(
            "--- /dev/null\n+++ b/dir/new\n@@ -0,0 +1,2 @@\n+a\n+b\n--- a/old\n+++ /dev/null\n@@ -1 +0,0 @@\n-x\n",
        )
        .unwrap();
        assert!(apply(&mut t, &p, 0).is_applied());
        assert_eq!(text(&t, "dir/new"), "a\nb\n");
        assert!(!t.contains_key(Path::new("old")));

        let mut t2 = tree(&[("dir/new", "")]);
        let r = apply(
            &mut t2,
            &parse_patch("--- /dev/null\n+++ b/dir/new\n@@ -0,0 +1 @@\n+a\n").unwrap(),
            0,
        );
        assert_eq!(r.files[0].error.as_deref(), Some("target file already exists"));
    }

    #[test]
    fn missing_target() {
        let mut t = MemTree::new();
        let r = apply(
            &mut t,
            &parse_patch("--- a/f\n+++ b/f\n@@ -1 +1 @@\n-a\n+b\n").unwrap(),
            2,
        );
        assert_eq!(r.files[0].error.as_deref(), Some("target file missing"));
    }

    #[test]
    fn no_newline_handling() {
        let mut t = tree(&[("f", "a\nb")]);
        let p = parse_patch("--- a/f\n+++ b/f\n@@ -1,2 +1,2 @@\n a\n-b\n\\ No newline at end of file\n+b\n").unwrap();
        assert!(apply(&mut t, &p, 0).is_applied());
        assert_eq!(text(&t, "f"), "a\nb\n");
    }

    #[test]
    fn crlf_files_keep_endings() {
        let mut t = tree(&[("f", "a\r\nb\r\n")]);
        let p = parse_patch("--- a/f\n+++ b/f\n@@ -1,2 +1,2 @@\n a\n-b\n+c\n").unwrap();
        assert!(apply(&mut t, &p, 0).is_applied());
        assert_eq!(text(&t, "f"), "a\r\nc\r\n");
    }

    #[test]
    fn anchorless_hunk_needs_unique_match() {
        let mut t = tree(&[("f", BASE)]);
        let p = parse_patch("--- a/f\n+++ b/f\n@@\n l6\n-l7\n+seven\n").unwrap();
        let r = apply(&mut t, &p, 0);
        assert_eq!(r.files[0].hunks[0], HunkReport::Applied { line: 6, fuzz: 0 });
        let mut t = tree(&[("f", "x\ny\nx\ny\n")]);
        let p = parse_patch("--- a/f\n+++ b/f\n@@\n-x\n+z\n").unwrap();
        assert!(!apply(&mut t, &p, 0).is_applied());
    }

    #[test]
    fn dir_target_refuses_symlink_escape() {
        let outside = tempfile::tempdir().unwrap();
        std::fs::write(outside.path().join("secret"), "s\n").unwrap();
        let repo = tempfile::tempdir().unwrap();
        std::os::unix::fs::symlink(outside.path(), repo.path().join("link")).unwrap();
        let mut target = DirTarget::new(repo.path()).unwrap();
        let p = parse_patch("--- a/link/secret\n+++ b/link/secret\n@@ -1 +1 @@\n-s\n+owned\n").unwrap();
        let r = apply(&mut target, &p, 0);
        assert!(!r.is_applied());
        assert_eq!(std::fs::read_to_string(outside.path().join("secret")).unwrap(), "s\n");
    }
}
