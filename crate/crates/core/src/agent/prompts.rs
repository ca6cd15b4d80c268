//! Prompt templates and placeholder substitution.
//!
//! Placeholders are `{name}` with `name` made of ASCII letters, digits and
//! underscores. `{{` and `}}` render as literal braces. Any other brace is
//! copied through unchanged.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

pub const GENERATE_TESTS_SYSTEM: &str = include_str!("prompts/generate_tests_system.txt");
pub const GENERATE_TESTS_USER: &str = include_str!("prompts/generate_tests_user.txt");
pub const EXPLORE_FILES_SYSTEM: &str = include_str!("prompts/explore_files_system.txt");
pub const EXPLORE_FILES_USER: &str = include_str!("prompts/explore_files_user.txt");
pub const EXPLORE_FILES_USER_INITIAL: &str = include_str!("prompts/explore_files_user_initial.txt");
pub const DEBUG_ONE_SYSTEM: &str = include_str!("prompts/debug_one_system.txt");
pub const DEBUG_ONE_USER: &str = include_str!("prompts/debug_one_user.txt");
pub const REVISE_PATCH_SYSTEM: &str = include_str!("prompts/revise_patch_system.txt");
pub const REVISE_PATCH_USER: &str = include_str!("prompts/revise_patch_user.txt");

pub type Bindings = BTreeMap<String, String>;

enum Piece<'a> {
    Text(&'a str),
    Brace(char),
    Placeholder(&'a str),
}

fn tokenize(template: &str) -> Vec<Piece<'_>> {
    let bytes = template.as_bytes();
    let mut pieces = Vec::new();
    let mut text_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if (b == b'{' || b == b'}') && bytes.get(i + 1) == Some(&b) {
            pieces.push(Piece::Text(&template[text_start..i]));
            pieces.push(Piece::Brace(b as char));
            i += 2;
            text_start = i;
            continue;
        }
        if b == b'{' {
            let end = bytes[i + 1..]
                .iter()
                .position(|c| !(c.is_ascii_alphanumeric() || *c == b'_'))
                .map(|p| i + 1 + p);
            if let Some(end) = end {
                if end > i + 1 && bytes[end] == b'}' {
                    pieces.push(Piece::Text(&template[text_start..i]));
                    pieces.push(Piece::Placeholder(&template[i + 1..end]));
                    i = end + 1;
                    text_start = i;
                    continue;
                }
            }
        }
        i += 1;
    }
    pieces.push(Piece::Text(&template[text_start..]));
    pieces
}

/// Placeholder names used by `template`.
pub fn placeholders(template: &str) -> BTreeSet<&str> {
    tokenize(template)
        .into_iter()
        .filter_map(|p| match p {
            Piece::Placeholder(name) => Some(name),
            _ => None,
        })
        .collect()
}

/// Substitutes every placeholder. Unbound placeholders are an error; bound
/// names the template does not use are ignored with a warning.
pub fn render_prompt(template: &str, bindings: &Bindings) -> Result<String> {
    let pieces = tokenize(template);
    let mut out = String::with_capacity(template.len());
    let mut used = BTreeSet::new();
    for piece in &pieces {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Brace(c) => out.push(*c),
            Piece::Placeholder(name) => {
                let value = bindings
                    .get(*name)
                    .ok_or_else(|| Error::Template(format!("unbound placeholder {{{name}}}")))?;
                used.insert(*name);
                out.push_str(value);
            }
        }
    }
    for key in bindings.keys() {
        if !used.contains(key.as_str()) {
            tracing::warn!(key = %key, "binding not used by template");
        }
    }
    Ok(out)
}

/// Builds bindings from `(name, value)` pairs.
pub fn bindings<I, K, V>(pairs: I) -> Bindings
where
    I: IntoIterator<Item = (K, V)>,
    K: Into<String>,
    V: Into<String>,
{
    pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_and_unescapes() {
        let b = bindings([("a", "X"), ("b_2", "{y}")]);
        assert_eq!(render_prompt("{a}-{b_2} {{a}} }} {", &b).unwrap(), "X-{y} {a} } {");
    }

    #[test]
    fn unbound_placeholder_is_an_error() {
        let err = render_prompt("hi {issue}", &Bindings::new()).unwrap_err();
        assert!(err.to_string().contains("{issue}"));
    }

    #[test]
    fn empty_template_and_extra_keys() {
        assert_eq!(render_prompt("", &bindings([("x", "y")])).unwrap(), "");
        let with = render_prompt("{a}", &bindings([("a", "1"), ("extra", "2")])).unwrap();
        let without = render_prompt("{a}", &bindings([("a", "1")])).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn non_placeholder_braces_pass_through() {
        let b = Bindings::new();
        assert_eq!(
            render_prompt("d = {1: 2}; {} {a-b}", &b).unwrap(),
            "d = {1: 2}; {} {a-b}"
        );
    }

    #[test]
    fn shipped_templates_have_expected_placeholders() {
        let names = |t| placeholders(t).into_iter().collect::<Vec<_>>();
        assert_eq!(
            names(GENERATE_TESTS_USER),
            vec!["issue", "test_cmd", "test_example", "test_example_file"]
        );
        assert_eq!(names(EXPLORE_FILES_USER), vec!["all_patches_str", "issue"]);
        assert_eq!(
            names(EXPLORE_FILES_USER_INITIAL),
            vec!["initial_failing_tests", "issue", "repo_structure"]
        );
        assert_eq!(
            names(DEBUG_ONE_USER),
            vec![
                "context",
                "failing_patch",
                "issue",
                "reg_or_repro",
                "test_message",
                "test_source"
            ]
        );
        assert_eq!(names(REVISE_PATCH_USER), vec!["error_message", "patch"]);
        for system in [
            GENERATE_TESTS_SYSTEM,
            EXPLORE_FILES_SYSTEM,
            DEBUG_ONE_SYSTEM,
            REVISE_PATCH_SYSTEM,
        ] {
            assert!(placeholders(system).is_empty());
        }
    }

    #[test]
    fn generate_tests_prompt_contains_command_line() {
        let b = bindings([
            ("issue", "median is wrong"),
            ("test_cmd", "python3 run_tests.py"),
            ("test_example", "tests/test_stats.py::test_mean"),
            ("test_example_file", "tests/test_stats.py"),
        ]);
        let text = render_prompt(GENERATE_TESTS_USER, &b).unwrap();
        assert!(text.contains("run as `python3 run_tests.py {test_name}`."));
        assert!(text.starts_with("Working directory: /home/repo/\n"));
    }
}
