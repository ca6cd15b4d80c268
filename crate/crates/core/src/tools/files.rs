//! Read-only repository tools. Each returns the text shown to the agent, or
//! a refusal as `Err`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::jail::Jail;
use crate::sandbox::tracked_files;

const EXCERPT_CHARS: usize = 240;

pub fn view_file(
    jail: &Jail,
    path: &str,
    start_line: Option<usize>,
    end_line: Option<usize>,
    page_size: usize,
) -> Result<String, String> {
    let (rel, real) = jail.resolve_existing(path)?;
    if real.is_dir() {
        return Err(format!("`{path}` is a directory. Use folder_hierarchy to list it."));
    }
    let bytes = std::fs::read(&real).map_err(|e| format!("Cannot read `{path}`: {e}"))?;
    let Ok(text) = String::from_utf8(bytes) else {
        return Err(format!("`{path}` is a binary file and cannot be shown."));
    };
    let lines: Vec<&str> = text.lines().collect();
    let total = lines.len();
    let shown = rel.display();
    if total == 0 {
        return Ok(format!("{shown} is empty."));
    }
    let start = start_line.unwrap_or(1).max(1);
    if start > total {
        return Err(format!(
            "start_line {start} is past the end of {shown} ({total} lines)."
        ));
    }
    let requested_end = end_line.unwrap_or(total).min(total);
    if requested_end < start {
        return Err(format!("end_line {requested_end} is before start_line {start}."));
    }
    let end = requested_end.min(start + page_size - 1);
    let width = end.to_string().len();
    let mut out = format!("{shown} (lines {start}-{end} of {total})\n");
    for (i, line) in lines[start - 1..end].iter().enumerate() {
        let _ = writeln!(out, "{:>width$}\t{line}", start + i);
    }
    if end < requested_end {
        let _ = writeln!(
            out,
            "[{} more lines; call view_file with start_line={} to continue]",
            requested_end - end,
            end + 1
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SearchMatch {
    pub file: PathBuf,
    pub line: usize,
    pub excerpt: String,
}

/// Literal, case-sensitive search over tracked files under `scope`.
/// Returns all matches in file then line order.
pub fn search(jail: &Jail, query: &str, scope: Option<&str>, whole_word: bool) -> Result<Vec<SearchMatch>, String> {
    if query.is_empty() {
        return Err("query must not be empty.".into());
    }
    if query.contains('\n') {
        return Err("query must be a single line.".into());
    }
    let scope_rel = match scope {
        Some(s) if !s.trim().is_empty() => {
            let (rel, _) = jail.resolve_existing(s)?;
            rel
        }
        _ => PathBuf::new(),
    };
    let files = tracked_files(jail.root()).map_err(|e| e.to_string())?;
    let mut matches = Vec::new();
    for rel in files.iter().filter(|f| f.starts_with(&scope_rel)) {
        let full = jail.root().join(rel);
        // Symlinked files are only searched when they stay inside the jail.
        match full.canonicalize() {
            Ok(real) if real.starts_with(jail.root()) && real.is_file() => {}
            _ => continue,
        }
        let Ok(text) = std::fs::read_to_string(&full) else {
            continue;
        };
        for (i, line) in text.lines().enumerate() {
            if contains(line, query, whole_word) {
                matches.push(SearchMatch {
                    file: rel.clone(),
                    line: i + 1,
                    excerpt: excerpt(line, query),
                });
            }
        }
    }
    Ok(matches)
}

pub fn find_keyword(
    jail: &Jail,
    query: &str,
    scope: Option<&str>,
    whole_word: bool,
    cap: usize,
) -> Result<String, String> {
    let matches = search(jail, query, scope, whole_word)?;
    if matches.is_empty() {
        return Ok(format!("No matches for `{query}`."));
    }
    let mut out = String::new();
    for m in matches.iter().take(cap) {
        let _ = writeln!(out, "{}:{}: {}", m.file.display(), m.line, m.excerpt);
    }
    if matches.len() > cap {
        let _ = writeln!(
            out,
            "[truncated: showing the first {cap} of {} matches; narrow the query or the path]",
            matches.len()
        );
    }
    Ok(out)
}

fn contains(line: &str, query: &str, whole_word: bool) -> bool {
    if !whole_word {
        return line.contains(query);
    }
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    line.match_indices(query).any(|(i, _)| {
        let before = line[..i].chars().next_back();
        let after = line[i + query.len()..].chars().next();
        !before.is_some_and(is_word) && !after.is_some_and(is_word)
    })
}

fn excerpt(line: &str, query: &str) -> String {
    let trimmed = line.trim();
    if trimmed.chars().count() <= EXCERPT_CHARS {
        return trimmed.to_string();
    }
    // Keep a window around the first occurrence.
    let at = trimmed.find(query).unwrap_or(0);
    let mut start = at.saturating_sub(EXCERPT_CHARS / 2);
    while !trimmed.is_char_boundary(start) {
        start -= 1;
    }
    let mut end = (start + EXCERPT_CHARS).max(at + query.len()).min(trimmed.len());
    while !trimmed.is_char_boundary(end) {
        end += 1;
    }
    let mut s = String::new();
    if start > 0 {
        s.push_str("...");
    }
    s.push_str(&trimmed[start..end]);
    if end < trimmed.len() {
        s.push_str("...");
    }
    s
}

#[derive(Default)]
struct Dir {
    dirs: BTreeMap<String, Dir>,
    files: Vec<String>,
}

impl Dir {
    fn insert(&mut self, path: &Path) {
        let parts: Vec<String> = path
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect();
        let Some((file, dirs)) = parts.split_last() else {
            return;
        };
        let mut node = self;
        for d in dirs {
            node = node.dirs.entry(d.clone()).or_default();
        }
        node.files.push(file.clone());
    }

    fn count_files(&self) -> usize {
        self.files.len() + self.dirs.values().map(Dir::count_files).sum::<usize>()
    }

    fn render(&self, out: &mut String, indent: usize, depth_left: usize) {
        let mut entries: Vec<(&str, Option<&Dir>)> = self
            .dirs
            .iter()
            .map(|(n, d)| (n.as_str(), Some(d)))
            .chain(self.files.iter().map(|f| (f.as_str(), None)))
            .collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        for (name, dir) in entries {
            let pad = "  ".repeat(indent);
            match dir {
                None => {
                    let _ = writeln!(out, "{pad}{name}");
                }
                Some(dir) if depth_left > 1 => {
                    let _ = writeln!(out, "{pad}{name}/");
                    dir.render(out, indent + 1, depth_left - 1);
                }
                Some(dir) => {
                    let n = dir.count_files();
                    let _ = writeln!(out, "{pad}{name}/ ({n} file{})", if n == 1 { "" } else { "s" });
                }
            }
        }
    }
}

/// Sorted tree of tracked files under `scope`, `depth` levels deep. Folders
/// cut off by the depth limit show their file count.
pub fn folder_hierarchy(jail: &Jail, depth: usize, scope: Option<&str>) -> Result<String, String> {
    let scope_rel = match scope {
        Some(s) if !s.trim().is_empty() => {
            let (rel, real) = jail.resolve_existing(s)?;
            if !real.is_dir() {
                return Err(format!("`{s}` is not a directory."));
            }
            rel
        }
        _ => PathBuf::new(),
    };
    let files = tracked_files(jail.root()).map_err(|e| e.to_string())?;
    let mut root = Dir::default();
    for f in &files {
        if let Ok(rest) = f.strip_prefix(&scope_rel) {
            root.insert(rest);
        }
    }
    let mut out = String::new();
    root.render(&mut out, 0, depth.max(1));
    Ok(out)
}
