use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use similar::{capture_diff_slices, group_diff_ops, Algorithm, DiffTag};

use super::apply::{MemTree, TextFile};

const CONTEXT_LINES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Line {
    text: String,
    no_eol: bool,
}

fn to_lines(text: Option<&str>) -> Vec<Line> {
    let Some(text) = text else {
        return Vec::new();
    };
    let file = TextFile::parse(text);
    let count = file.lines.len();
    file.lines
        .into_iter()
        .enumerate()
        .map(|(i, text)| Line {
            text,
            no_eol: i + 1 == count && !file.trailing_newline,
        })
        .collect()
}

/// Unified diff of one file. `None` stands for an absent file. Returns an
/// empty string when both sides are equal.
pub fn diff_text(path: &Path, old: Option<&str>, new: Option<&str>) -> String {
    if old == new {
        return String::new();
    }
    let old_lines = to_lines(old);
    let new_lines = to_lines(new);
    let path = path.to_string_lossy();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "--- {}",
        if old.is_some() {
            format!("a/{path}")
        } else {
            "/dev/null".into()
        }
    );
    let _ = writeln!(
        out,
        "+++ {}",
        if new.is_some() {
            format!("b/{path}")
        } else {
            "/dev/null".into()
        }
    );
    if old_lines == new_lines {
        // Only possible when both sides are empty text but one is absent.
        return String::new();
    }
    let ops = capture_diff_slices(Algorithm::Myers, &old_lines, &new_lines);
    for group in group_diff_ops(ops, CONTEXT_LINES) {
        let (Some(first), Some(last)) = (group.first(), group.last()) else {
            continue;
        };
        let old_range = first.old_range().start..last.old_range().end;
        let new_range = first.new_range().start..last.new_range().end;
        let header_start = |r: &std::ops::Range<usize>| if r.is_empty() { r.start } else { r.start + 1 };
        let _ = writeln!(
            out,
            "@@ -{},{} +{},{} @@",
            header_start(&old_range),
            old_range.len(),
            header_start(&new_range),
            new_range.len()
        );
        for op in &group {
            let (tag, old_r, new_r) = op.as_tag_tuple();
            match tag {
                DiffTag::Equal => {
                    for line in &old_lines[old_r] {
                        push_line(&mut out, ' ', line);
                    }
                }
                DiffTag::Delete => {
                    for line in &old_lines[old_r] {
                        push_line(&mut out, '-', line);
                    }
                }
                DiffTag::Insert => {
                    for line in &new_lines[new_r] {
                        push_line(&mut out, '+', line);
                    }
                }
                DiffTag::Replace => {
                    for line in &old_lines[old_r] {
                        push_line(&mut out, '-', line);
                    }
                    for line in &new_lines[new_r] {
                        push_line(&mut out, '+', line);
                    }
                }
            }
        }
    }
    out
}

fn push_line(out: &mut String, marker: char, line: &Line) {
    out.push(marker);
    out.push_str(&line.text);
    out.push('\n');
    if line.no_eol {
        out.push_str("\\ No newline at end of file\n");
    }
}

/// Diff between two trees, one section per changed file in path order.
/// Non-UTF-8 files that differ are skipped with a warning.
pub fn diff_trees(old: &MemTree, new: &MemTree) -> String {
    let paths: BTreeSet<&Path> = old.keys().chain(new.keys()).map(|p| p.as_path()).collect();
    let mut out = String::new();
    for path in paths {
        let (a, b) = (old.get(path), new.get(path));
        if a == b {
            continue;
        }
        match (as_text(a), as_text(b)) {
            (Ok(a), Ok(b)) => out.push_str(&diff_text(path, a, b)),
            _ => tracing::warn!(path = %path.display(), "skipping binary file in diff"),
        }
    }
    out
}

fn as_text(bytes: Option<&Vec<u8>>) -> Result<Option<&str>, std::str::Utf8Error> {
    bytes.map(|b| std::str::from_utf8(b)).transpose()
}
