use std::path::PathBuf;

use super::{FileChange, FilePatch, Hunk, HunkLine, LineOp, Patch};
use crate::error::{Error, Result};
use crate::manifest::is_repo_relative;

const NO_EOL_MARKER: &str = "\\ No newline at end of file";

/// Parses standard unified-diff text.
///
/// Accepts `diff --git` preambles, `a/`/`b/` prefixes, `/dev/null` for
/// creation and deletion, and bare `@@` headers without line numbers (the
/// hunk body then runs to the next header). CRLF input is normalized to LF.
/// Binary hunks are rejected.
pub fn parse_patch(text: &str) -> Result<Patch> {
    let normalized = text.replace("\r\n", "\n");
    if normalized.trim().is_empty() {
        return Err(perr(1, "patch is empty"));
    }
    let lines: Vec<&str> = normalized.lines().collect();
    let mut parser = Parser { lines, pos: 0 };
    parser.parse()
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::PatchParse {
        line,
        message: message.into(),
    }
}

struct Parser<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).copied()
    }

    /// 1-based line number of the current position.
    fn lineno(&self) -> usize {
        self.pos + 1
    }

    fn parse(&mut self) -> Result<Patch> {
        let mut files: Vec<FilePatch> = Vec::new();
        while let Some(line) = self.peek() {
            if line.starts_with("GIT binary patch") || line.starts_with("Binary files ") {
                return Err(perr(self.lineno(), "binary patches are not supported"));
            }
            if line.starts_with("--- ") && self.lines.get(self.pos + 1).is_some_and(|l| l.starts_with("+++ ")) {
                let file = self.parse_file()?;
                match files.iter_mut().find(|f| f.path == file.path) {
                    Some(existing) if existing.change == FileChange::Modify && file.change == FileChange::Modify => {
                        existing.hunks.extend(file.hunks);
                        check_order(existing, self.lineno())?;
                    }
                    Some(_) => {
                        return Err(perr(
                            self.lineno(),
                            format!("conflicting sections for {}", file.path.display()),
                        ))
                    }
                    None => files.push(file),
                }
                continue;
            }
            if line.starts_with("@@") {
                return Err(perr(self.lineno(), "hunk header without a preceding file header"));
            }
            // Preamble lines (diff --git, index, mode lines, commentary) carry nothing we need.
            self.pos += 1;
        }
        if files.is_empty() {
            return Err(perr(1, "no file sections found"));
        }
        Ok(Patch { files })
    }

    fn parse_file(&mut self) -> Result<FilePatch> {
        let header_line = self.lineno();
        let old = parse_path(&self.lines[self.pos][4..], header_line)?;
        let new = parse_path(&self.lines[self.pos + 1][4..], header_line + 1)?;
        self.pos += 2;
        let (path, change) = match (old, new) {
            (None, None) => return Err(perr(header_line, "both sides are /dev/null")),
            (None, Some(p)) => (p, FileChange::Create),
            (Some(p), None) => (p, FileChange::Delete),
            (Some(_), Some(p)) => (p, FileChange::Modify),
        };
        let mut hunks = Vec::new();
        while self.peek().is_some_and(|l| l.starts_with("@@")) {
            hunks.push(self.parse_hunk()?);
        }
        if hunks.is_empty() {
            return Err(perr(self.lineno(), format!("no hunks for {}", path.display())));
        }
        let file = FilePatch { path, change, hunks };
        match file.change {
            FileChange::Create if file.hunks.iter().any(|h| h.old_len() > 0) => {
                return Err(perr(header_line, "new file hunk has old-side lines"));
            }
            FileChange::Delete if file.hunks.iter().any(|h| h.new_len() > 0) => {
                return Err(perr(header_line, "deleted file hunk has new-side lines"));
            }
            _ => {}
        }
        check_order(&file, header_line)?;
        Ok(file)
    }

    fn parse_hunk(&mut self) -> Result<Hunk> {
        let header_line = self.lineno();
        let counts = parse_hunk_header(self.lines[self.pos], header_line)?;
        self.pos += 1;
        let mut hunk = Hunk {
            anchor_line: counts.map(|c| c.0),
            lines: Vec::new(),
            old_no_eol: false,
            new_no_eol: false,
        };
        match counts {
            Some((_, old_len, _, new_len)) => self.counted_body(&mut hunk, old_len, new_len)?,
            None => self.open_body(&mut hunk)?,
        }
        if hunk.lines.is_empty() {
            return Err(perr(header_line, "empty hunk"));
        }
        Ok(hunk)
    }

    fn counted_body(&mut self, hunk: &mut Hunk, old_len: usize, new_len: usize) -> Result<()> {
        let (mut old_seen, mut new_seen) = (0, 0);
        while old_seen < old_len || new_seen < new_len {
            let Some(line) = self.peek() else {
                return Err(perr(
                    self.lineno(),
                    format!(
                        "unexpected end of patch inside hunk (expected {} more old / {} more new lines)",
                        old_len - old_seen,
                        new_len - new_seen
                    ),
                ));
            };
            if line.starts_with(NO_EOL_MARKER) {
                mark_no_eol(hunk, self.lineno())?;
                self.pos += 1;
                continue;
            }
            let Some(parsed) = body_line(line) else {
                return Err(perr(
                    self.lineno(),
                    format!("hunk body truncated: unexpected line {line:?}"),
                ));
            };
            match parsed.op {
                LineOp::Context => {
                    old_seen += 1;
                    new_seen += 1;
                }
                LineOp::Remove => old_seen += 1,
                LineOp::Add => new_seen += 1,
            }
            if old_seen > old_len || new_seen > new_len {
                return Err(perr(self.lineno(), "hunk body does not match header line counts"));
            }
            hunk.lines.push(parsed);
            self.pos += 1;
        }
        if self.peek().is_some_and(|l| l.starts_with(NO_EOL_MARKER)) {
            mark_no_eol(hunk, self.lineno())?;
            self.pos += 1;
        }
        if let Some(next) = self.peek() {
            let is_next_file =
                next.starts_with("--- ") && self.lines.get(self.pos + 1).is_some_and(|l| l.starts_with("+++ "));
            if !is_next_file && (next.starts_with('+') || next.starts_with('-') || next.starts_with(' ')) {
                return Err(perr(self.lineno(), "hunk body longer than header line counts"));
            }
        }
        Ok(())
    }

    fn open_body(&mut self, hunk: &mut Hunk) -> Result<()> {
        while let Some(line) = self.peek() {
            if line.starts_with("@@") || line.starts_with("diff ") {
                break;
            }
            if line.starts_with("--- ") && self.lines.get(self.pos + 1).is_some_and(|l| l.starts_with("+++ ")) {
                break;
            }
            if line.starts_with(NO_EOL_MARKER) {
                mark_no_eol(hunk, self.lineno())?;
                self.pos += 1;
                continue;
            }
            if line.is_empty() {
                // A blank line only belongs to the hunk if more body follows.
                let more = self.lines[self.pos + 1..]
                    .iter()
                    .find(|l| !l.is_empty())
                    .is_some_and(|l| matches!(l.chars().next(), Some(' ' | '+' | '-')) && !l.starts_with("--- "));
                if !more {
                    break;
                }
            }
            match body_line(line) {
                Some(parsed) => hunk.lines.push(parsed),
                None => break,
            }
            self.pos += 1;
        }
        Ok(())
    }
}

fn body_line(line: &str) -> Option<HunkLine> {
    let mut chars = line.chars();
    let op = match chars.next() {
        // Editors and models often strip the single space of blank context lines.
        None => return Some(HunkLine::new(LineOp::Context, "")),
        Some(' ') => LineOp::Context,
        Some('-') => LineOp::Remove,
        Some('+') => LineOp::Add,
        Some(_) => return None,
    };
    Some(HunkLine::new(op, chars.as_str()))
}

fn mark_no_eol(hunk: &mut Hunk, line: usize) -> Result<()> {
    match hunk.lines.last().map(|l| l.op) {
        Some(LineOp::Context) => {
            hunk.old_no_eol = true;
            hunk.new_no_eol = true;
        }
        Some(LineOp::Remove) => hunk.old_no_eol = true,
        Some(LineOp::Add) => hunk.new_no_eol = true,
        None => return Err(perr(line, "no-newline marker before any hunk line")),
    }
    Ok(())
}

/// Returns `(old_start, old_len, new_start, new_len)`, or `None` for a bare `@@`.
fn parse_hunk_header(line: &str, lineno: usize) -> Result<Option<(usize, usize, usize, usize)>> {
    let rest = line[2..].trim_start();
    if !rest.starts_with('-') {
        return Ok(None);
    }
    let bad = || perr(lineno, format!("malformed hunk header {line:?}"));
    let end = rest.find(" @@").ok_or_else(bad)?;
    let mut ranges = rest[..end].split_whitespace();
    let old = ranges.next().and_then(|r| r.strip_prefix('-')).ok_or_else(bad)?;
    let new = ranges.next().and_then(|r| r.strip_prefix('+')).ok_or_else(bad)?;
    if ranges.next().is_some() {
        return Err(bad());
    }
    let range = |r: &str| -> Option<(usize, usize)> {
        match r.split_once(',') {
            Some((s, l)) => Some((s.parse().ok()?, l.parse().ok()?)),
            None => Some((r.parse().ok()?, 1)),
        }
    };
    let (old_start, old_len) = range(old).ok_or_else(bad)?;
    let (new_start, new_len) = range(new).ok_or_else(bad)?;
    if old_len > 0 && old_start == 0 {
        return Err(bad());
    }
    Ok(Some((old_start, old_len, new_start, new_len)))
}

/// Parses one side of a `---`/`+++` header; `None` means `/dev/null`.
fn parse_path(raw: &str, lineno: usize) -> Result<Option<PathBuf>> {
    let raw = raw.split('\t').next().unwrap_or_default().trim_end();
    let raw = raw.strip_prefix('"').and_then(|r| r.strip_suffix('"')).unwrap_or(raw);
    if raw == "/dev/null" {
        return Ok(None);
    }
    let stripped = raw.strip_prefix("a/").or_else(|| raw.strip_prefix("b/")).unwrap_or(raw);
    let path = PathBuf::from(stripped);
    if !is_repo_relative(&path) {
        return Err(perr(lineno, format!("path {raw:?} is not repository-relative")));
    }
    Ok(Some(path))
}

fn check_order(file: &FilePatch, lineno: usize) -> Result<()> {
    let mut prev_end: Option<usize> = None;
    for hunk in &file.hunks {
        let Some(start) = hunk.anchor_line else {
            continue;
        };
        // Old-file index range covered by the hunk, in 0-based coordinates.
        let begin = if hunk.old_len() == 0 { start } else { start - 1 };
        if prev_end.is_some_and(|end| begin < end) {
            return Err(perr(
                lineno,
                format!("overlapping or out-of-order hunks in {}", file.path.display()),
            ));
        }
        prev_end = Some(begin + hunk.old_len());
    }
    Ok(())
}
