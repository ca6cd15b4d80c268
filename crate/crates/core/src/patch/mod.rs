//! Unified-diff patches: parsing, placement with bounded positional fuzz,
//! all-or-nothing application and diff emission.
//!
//! Every patch is expressed against the initial repository snapshot. Hunk
//! positions are therefore resolved in original-file coordinates and spliced
//! from the bottom up.

mod apply;
mod diff;
mod parse;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub use apply::{
    apply, apply_to_text, ApplyReport, ApplyStatus, DirTarget, FileReport, HunkMismatch, HunkReport, MemTree,
    MismatchReason, NearestMatch, PatchTarget, TextFile,
};
pub use diff::{diff_text, diff_trees};
pub use parse::parse_patch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LineOp {
    Context,
    Remove,
    Add,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HunkLine {
    pub op: LineOp,
    pub text: String,
}

impl HunkLine {
    pub fn new(op: LineOp, text: impl Into<String>) -> Self {
        HunkLine { op, text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Hunk {
    /// 1-based old-file start from the `@@` header; `None` for a bare `@@`.
    pub anchor_line: Option<usize>,
    pub lines: Vec<HunkLine>,
    /// The old side's last line has no trailing newline.
    pub old_no_eol: bool,
    /// The new side's last line has no trailing newline.
    pub new_no_eol: bool,
}

impl Hunk {
    /// Lines the target must contain at the application point, in order.
    pub fn old_lines(&self) -> Vec<&str> {
        self.side(LineOp::Add)
    }

    /// Lines that replace [`Hunk::old_lines`].
    pub fn new_lines(&self) -> Vec<&str> {
        self.side(LineOp::Remove)
    }

    fn side(&self, excluded: LineOp) -> Vec<&str> {
        self.lines
            .iter()
            .filter(|l| l.op != excluded)
            .map(|l| l.text.as_str())
            .collect()
    }

    pub fn removed(&self) -> Vec<&str> {
        self.of(LineOp::Remove)
    }

    pub fn added(&self) -> Vec<&str> {
        self.of(LineOp::Add)
    }

    fn of(&self, op: LineOp) -> Vec<&str> {
        self.lines
            .iter()
            .filter(|l| l.op == op)
            .map(|l| l.text.as_str())
            .collect()
    }

    pub fn context_before(&self) -> Vec<&str> {
        self.lines
            .iter()
            .take_while(|l| l.op == LineOp::Context)
            .map(|l| l.text.as_str())
            .collect()
    }

    pub fn context_after(&self) -> Vec<&str> {
        let mut tail: Vec<&str> = self
            .lines
            .iter()
            .rev()
            .take_while(|l| l.op == LineOp::Context)
            .map(|l| l.text.as_str())
            .collect();
        if tail.len() == self.lines.len() {
            return Vec::new();
        }
        tail.reverse();
        tail
    }

    pub fn old_len(&self) -> usize {
        self.lines.iter().filter(|l| l.op != LineOp::Add).count()
    }

    pub fn new_len(&self) -> usize {
        self.lines.iter().filter(|l| l.op != LineOp::Remove).count()
    }

    pub fn is_noop(&self) -> bool {
        self.lines.iter().all(|l| l.op == LineOp::Context) && self.old_no_eol == self.new_no_eol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FileChange {
    Modify,
    Create,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FilePatch {
    /// Repo-relative path of the affected file.
    pub path: PathBuf,
    pub change: FileChange,
    pub hunks: Vec<Hunk>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Patch {
    pub files: Vec<FilePatch>,
}

impl Patch {
    pub fn touched_files(&self) -> BTreeSet<PathBuf> {
        self.files.iter().map(|f| f.path.clone()).collect()
    }

    pub fn hunk_count(&self) -> usize {
        self.files.iter().map(|f| f.hunks.len()).sum()
    }

    /// True when applying the patch cannot change any file.
    pub fn is_noop(&self) -> bool {
        self.files
            .iter()
            .all(|f| f.change == FileChange::Modify && f.hunks.iter().all(Hunk::is_noop))
    }

    /// Every added line of the patch, with the file it lands in.
    pub fn added_lines(&self) -> impl Iterator<Item = (&Path, &str)> {
        self.files.iter().flat_map(|f| {
            f.hunks
                .iter()
                .flat_map(|h| h.added())
                .map(move |l| (f.path.as_path(), l))
        })
    }

    pub fn removed_lines(&self) -> impl Iterator<Item = (&Path, &str)> {
        self.files.iter().flat_map(|f| {
            f.hunks
                .iter()
                .flat_map(|h| h.removed())
                .map(move |l| (f.path.as_path(), l))
        })
    }

    /// Normalized unified-diff text. Parsing the output yields an equal patch.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for file in &self.files {
            let path = file.path.to_string_lossy();
            let (old, new) = match file.change {
                FileChange::Modify => (format!("a/{path}"), format!("b/{path}")),
                FileChange::Create => ("/dev/null".to_string(), format!("b/{path}")),
                FileChange::Delete => (format!("a/{path}"), "/dev/null".to_string()),
            };
            let _ = writeln!(out, "--- {old}");
            let _ = writeln!(out, "+++ {new}");
            let mut delta: isize = 0;
            for hunk in &file.hunks {
                let (old_len, new_len) = (hunk.old_len(), hunk.new_len());
                match hunk.anchor_line {
                    Some(start) => {
                        let new_start = if new_len == 0 {
                            (start as isize + delta).max(0) as usize
                        } else if old_len == 0 {
                            (start as isize + delta + 1).max(1) as usize
                        } else {
                            (start as isize + delta).max(1) as usize
                        };
                        let _ = writeln!(out, "@@ -{start},{old_len} +{new_start},{new_len} @@");
                    }
                    None => out.push_str("@@\n"),
                }
                delta += new_len as isize - old_len as isize;
                write_hunk_body(&mut out, hunk);
            }
        }
        out
    }
}

fn write_hunk_body(out: &mut String, hunk: &Hunk) {
    let last_old = hunk.lines.iter().rposition(|l| l.op != LineOp::Add);
    let last_new = hunk.lines.iter().rposition(|l| l.op != LineOp::Remove);
    for (i, line) in hunk.lines.iter().enumerate() {
        let marker = match line.op {
            LineOp::Context => ' ',
            LineOp::Remove => '-',
            LineOp::Add => '+',
        };
        out.push(marker);
        out.push_str(&line.text);
        out.push('\n');
        let no_eol = (hunk.old_no_eol && Some(i) == last_old && line.op != LineOp::Add)
            || (hunk.new_no_eol && Some(i) == last_new && line.op != LineOp::Remove);
        if no_eol {
            out.push_str("\\ No newline at end of file\n");
        }
    }
}
