//! Tools available to sub-agents, the repository jail and the test-path guard.
//!
//! Tool results are plain text. Refusals (jail violations, guard hits, bad
//! arguments) come back as ordinary results with `ok = false`; they never end
//! an episode.

mod files;
mod guard;
mod jail;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{json, Value};

pub use files::{find_keyword, folder_hierarchy, search, view_file, SearchMatch};
pub use guard::TestGuard;
pub use jail::Jail;

use crate::agent::{Phase, ToolOutput, ToolSpec, Toolbox};
use crate::config::WorkflowConfig;
use crate::debugger::{whitelist_text, DebugSession};
use crate::error::{Error, Result};
use crate::patch::{self, parse_patch, MemTree};
use crate::sandbox::{TestRunner, TestStatus};

pub const VIEW_FILE: &str = "view_file";
pub const FIND_KEYWORD: &str = "find_keyword";
pub const FOLDER_HIERARCHY: &str = "folder_hierarchy";
pub const SUBMIT_PATCH: &str = "submit_patch";
pub const APPLY_PATCH: &str = "apply_patch";
pub const DEBUGGER: &str = "debugger";
pub const SUBMIT_REPORT: &str = "submit_report";
pub const EVALUATE_TESTS: &str = "evaluate_tests";
pub const WRITE_TEST: &str = "write_test";
pub const SUBMIT_TESTS: &str = "submit_tests";

/// Every registered tool.
pub const ALL_TOOLS: [&str; 10] = [
    VIEW_FILE,
    FIND_KEYWORD,
    FOLDER_HIERARCHY,
    SUBMIT_PATCH,
    APPLY_PATCH,
    DEBUGGER,
    SUBMIT_REPORT,
    EVALUATE_TESTS,
    WRITE_TEST,
    SUBMIT_TESTS,
];

/// Tools a phase may call, in the order they are published.
pub fn phase_tools(phase: Phase) -> &'static [&'static str] {
    match phase {
        Phase::ExploreFiles => &[VIEW_FILE, FIND_KEYWORD, FOLDER_HIERARCHY, SUBMIT_PATCH],
        Phase::RevisePatch => &[VIEW_FILE, FIND_KEYWORD, FOLDER_HIERARCHY, APPLY_PATCH],
        Phase::DebugOne => &[VIEW_FILE, FIND_KEYWORD, FOLDER_HIERARCHY, DEBUGGER, SUBMIT_REPORT],
        Phase::GenerateTests => &[
            VIEW_FILE,
            FIND_KEYWORD,
            FOLDER_HIERARCHY,
            WRITE_TEST,
            EVALUATE_TESTS,
            SUBMIT_TESTS,
        ],
    }
}

/// The terminal tool of each phase.
pub fn terminal_tool(phase: Phase) -> &'static str {
    match phase {
        Phase::ExploreFiles => SUBMIT_PATCH,
        Phase::RevisePatch => APPLY_PATCH,
        Phase::DebugOne => SUBMIT_REPORT,
        Phase::GenerateTests => SUBMIT_TESTS,
    }
}

const PATCH_FORMAT: &str = "The patch is a unified diff against the initial repository state, with repo-relative paths: `--- a/path` and `+++ b/path` headers (use /dev/null for created or deleted files), then hunks starting with `@@ -start,count +start,count @@`. Hunk lines start with a space (context), `-` (removed) or `+` (added). Context and removed lines must match the file exactly; positions may be off by a few lines.";

fn spec(name: &str, description: &str, parameters: Value) -> ToolSpec {
    ToolSpec {
        name: name.to_string(),
        description: description.to_string(),
        parameters,
    }
}

fn tool_spec(name: &str) -> ToolSpec {
    match name {
        VIEW_FILE => spec(
            name,
            "Show a file from the repository with 1-based line numbers. Long files are shown one page at a time.",
            json!({"type": "object", "properties": {
                "path": {"type": "string", "description": "Repo-relative path or a path under /home/repo."},
                "start_line": {"type": "integer", "minimum": 1},
                "end_line": {"type": "integer", "minimum": 1}
            }, "required": ["path"]}),
        ),
        FIND_KEYWORD => spec(
            name,
            "Search repository files for a literal, case-sensitive string. Results are `file:line: text`, in file order.",
            json!({"type": "object", "properties": {
                "query": {"type": "string"},
                "path": {"type": "string", "description": "Optional file or folder to search in."},
                "whole_word": {"type": "boolean", "description": "Only match whole identifiers."}
            }, "required": ["query"]}),
        ),
        FOLDER_HIERARCHY => spec(
            name,
            "Show the sorted tree of repository files.",
            json!({"type": "object", "properties": {
                "depth": {"type": "integer", "minimum": 1},
                "path": {"type": "string", "description": "Optional folder to show."}
            }}),
        ),
        SUBMIT_PATCH => spec(
            name,
            &format!("Submit your fix and end this step. {PATCH_FORMAT} Test files cannot be modified."),
            json!({"type": "object", "properties": {"patch": {"type": "string"}}, "required": ["patch"]}),
        ),
        APPLY_PATCH => spec(
            name,
            &format!("Apply the revised patch. On success this step ends; otherwise the error explains which hunk did not match. {PATCH_FORMAT}"),
            json!({"type": "object", "properties": {"patch": {"type": "string"}}, "required": ["patch"]}),
        ),
        DEBUGGER => spec(
            name,
            &format!("Send one command to the debugger attached to the failing test. Allowed commands: {}.", whitelist_text()),
            json!({"type": "object", "properties": {"command": {"type": "string"}}, "required": ["command"]}),
        ),
        SUBMIT_REPORT => spec(
            name,
            "Submit your analysis of why the patch fails this test. Ends the debugging session.",
            json!({"type": "object", "properties": {"report": {"type": "string"}}, "required": ["report"]}),
        ),
        EVALUATE_TESTS => spec(
            name,
            "Run the named tests one at a time and return each result with its output.",
            json!({"type": "object", "properties": {
                "test_names": {"type": "array", "items": {"type": "string"}, "minItems": 1}
            }, "required": ["test_names"]}),
        ),
        WRITE_TEST => spec(
            name,
            "Write test code. mode=create makes a new file in the test tree; mode=append adds code to the end of the example test file or of a file you created.",
            json!({"type": "object", "properties": {
                "path": {"type": "string"},
                "content": {"type": "string"},
                "mode": {"type": "string", "enum": ["create", "append"]}
            }, "required": ["path", "content", "mode"]}),
        ),
        SUBMIT_TESTS => spec(
            name,
            "Submit the reproduction tests you wrote: their runner names, files and 1-based definition lines.",
            json!({"type": "object", "properties": {
                "tests": {"type": "array", "minItems": 1, "items": {"type": "object", "properties": {
                    "name": {"type": "string"}, "file": {"type": "string"}, "line": {"type": "integer", "minimum": 1}
                }, "required": ["name", "file", "line"]}}
            }, "required": ["tests"]}),
        ),
        other => unreachable!("no schema for {other}"),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewArgs {
    path: String,
    start_line: Option<usize>,
    end_line: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FindArgs {
    query: String,
    path: Option<String>,
    #[serde(default)]
    whole_word: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HierarchyArgs {
    depth: Option<usize>,
    path: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PatchArgs {
    patch: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DebuggerArgs {
    command: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportArgs {
    report: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateArgs {
    test_names: Vec<String>,
}

#[derive(Deserialize, PartialEq, Eq, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum WriteMode {
    Create,
    Append,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WriteArgs {
    path: String,
    content: String,
    mode: WriteMode,
}

/// Entry of a `submit_tests` call.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct SubmittedTest {
    pub name: String,
    pub file: String,
    pub line: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitTestsArgs {
    tests: Vec<SubmittedTest>,
}

fn parse_args<T: for<'de> Deserialize<'de>>(tool: &str, args: &Value) -> std::result::Result<T, ToolOutput> {
    let args = if args.is_null() { json!({}) } else { args.clone() };
    serde_json::from_value(args).map_err(|e| ToolOutput::refused(format!("Invalid arguments for `{tool}`: {e}")))
}

fn from_result(r: std::result::Result<String, String>) -> ToolOutput {
    match r {
        Ok(s) => ToolOutput::ok(s),
        Err(s) => ToolOutput::refused(s),
    }
}

/// Tools of one episode, bound to a working copy.
pub struct Toolset<'a> {
    phase: Phase,
    names: Vec<&'static str>,
    jail: Jail,
    config: &'a WorkflowConfig,
    guard: &'a TestGuard,
    base_tree: Option<&'a MemTree>,
    runner: Option<&'a TestRunner>,
    debugger: Option<&'a mut DebugSession>,
    appendable: BTreeSet<PathBuf>,
    written: BTreeSet<PathBuf>,
}

impl<'a> Toolset<'a> {
    fn new(phase: Phase, root: &Path, config: &'a WorkflowConfig, guard: &'a TestGuard) -> Result<Self> {
        let jail = Jail::new(root).map_err(|e| Error::io(root, e))?;
        Ok(Toolset {
            phase,
            names: phase_tools(phase).to_vec(),
            jail,
            config,
            guard,
            base_tree: None,
            runner: None,
            debugger: None,
            appendable: BTreeSet::new(),
            written: BTreeSet::new(),
        })
    }

    pub fn explore(root: &Path, config: &'a WorkflowConfig, guard: &'a TestGuard) -> Result<Self> {
        Self::new(Phase::ExploreFiles, root, config, guard)
    }

    /// `base_tree` is the initial snapshot that revised patches must apply to.
    pub fn revise(
        root: &Path,
        config: &'a WorkflowConfig,
        guard: &'a TestGuard,
        base_tree: &'a MemTree,
    ) -> Result<Self> {
        let mut t = Self::new(Phase::RevisePatch, root, config, guard)?;
        t.base_tree = Some(base_tree);
        Ok(t)
    }

    /// Without a session the debugger tool is not offered.
    pub fn debug(
        root: &Path,
        config: &'a WorkflowConfig,
        guard: &'a TestGuard,
        debugger: Option<&'a mut DebugSession>,
    ) -> Result<Self> {
        let mut t = Self::new(Phase::DebugOne, root, config, guard)?;
        if debugger.is_none() {
            t.names.retain(|n| *n != DEBUGGER);
        }
        t.debugger = debugger;
        Ok(t)
    }

    /// `example_file` may be appended to; new files may be created anywhere
    /// in the test tree.
    pub fn generate(
        root: &Path,
        config: &'a WorkflowConfig,
        guard: &'a TestGuard,
        runner: &'a TestRunner,
        example_file: Option<&Path>,
    ) -> Result<Self> {
        let mut t = Self::new(Phase::GenerateTests, root, config, guard)?;
        t.runner = Some(runner);
        t.appendable.extend(example_file.map(Path::to_path_buf));
        Ok(t)
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Files written through `write_test`, repo-relative.
    pub fn written_files(&self) -> &BTreeSet<PathBuf> {
        &self.written
    }

    fn check_patch(&self, text: &str) -> std::result::Result<patch::Patch, ToolOutput> {
        if text.trim().is_empty() {
            return Err(ToolOutput::refused("The patch is empty."));
        }
        let parsed =
            parse_patch(text).map_err(|e| ToolOutput::refused(format!("The patch could not be parsed: {e}")))?;
        if let Some(refusal) = self.guard.refusal(&parsed) {
            return Err(ToolOutput::refused(refusal));
        }
        Ok(parsed)
    }

    fn submit_patch(&self, args: PatchArgs) -> ToolOutput {
        match self.check_patch(&args.patch) {
            Ok(_) => ToolOutput::terminal("Patch submitted.", json!({"patch": args.patch})),
            Err(refusal) => refusal,
        }
    }

    fn apply_patch(&self, args: PatchArgs) -> ToolOutput {
        let parsed = match self.check_patch(&args.patch) {
            Ok(p) => p,
            Err(refusal) => return refusal,
        };
        let Some(base) = self.base_tree else {
            return ToolOutput::refused("apply_patch is not available here.");
        };
        let mut scratch = base.clone();
        let report = patch::apply(&mut scratch, &parsed, self.config.max_fuzz as usize);
        if report.is_applied() {
            ToolOutput::terminal("Patch applied successfully.", json!({"patch": args.patch}))
        } else {
            ToolOutput::refused(format!("The patch could not be applied.\n{}", report.render()))
        }
    }

    fn evaluate_tests(&self, args: EvaluateArgs) -> ToolOutput {
        let Some(runner) = self.runner else {
            return ToolOutput::refused("evaluate_tests is not available here.");
        };
        if args.test_names.is_empty() {
            return ToolOutput::refused("test_names must list at least one test.");
        }
        let mut out = String::new();
        for name in &args.test_names {
            let outcome = runner.run_test(self.jail.root(), name);
            let label = match outcome.status {
                TestStatus::Passed => "PASSED",
                TestStatus::Failed => "FAILED",
                TestStatus::Errored => "ERROR",
                TestStatus::Timeout => "TIMEOUT",
            };
            out.push_str(&format!("{name}: {label}\n"));
            let msg = outcome.message.trim_end();
            if !msg.is_empty() {
                out.push_str(msg);
                out.push('\n');
            }
            out.push('\n');
        }
        ToolOutput::ok(out.trim_end().to_string() + "\n")
    }

    fn write_test(&mut self, args: WriteArgs) -> ToolOutput {
        if args.content.trim().is_empty() {
            return ToolOutput::refused("content must not be empty.");
        }
        let (rel, full) = match self.jail.resolve_new(&args.path) {
            Ok(p) => p,
            Err(e) => return ToolOutput::refused(e),
        };
        let exists = full.exists();
        let existing = match args.mode {
            WriteMode::Create => {
                if exists {
                    return ToolOutput::refused(format!(
                        "{} already exists; use mode=append on the example test file or a file you created.",
                        rel.display()
                    ));
                }
                if !self.guard.is_protected(&rel) {
                    return ToolOutput::refused(format!(
                        "{} is not in the test tree. New test files must live in a test folder or be named like a test file.",
                        rel.display()
                    ));
                }
                String::new()
            }
            WriteMode::Append => {
                if !(self.appendable.contains(&rel) || self.written.contains(&rel)) {
                    return ToolOutput::refused(format!(
                        "Appending is only allowed to the example test file or to files created with write_test; {} is neither.",
                        rel.display()
                    ));
                }
                match std::fs::read_to_string(&full) {
                    Ok(t) => t,
                    Err(e) => return ToolOutput::refused(format!("Cannot read {}: {e}", rel.display())),
                }
            }
        };
        let mut text = existing.clone();
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        if !text.is_empty() {
            text.push('\n');
        }
        let first_line = text.lines().count() + 1;
        text.push_str(&args.content);
        if !text.ends_with('\n') {
            text.push('\n');
        }
        let last_line = text.lines().count();
        if let Some(parent) = full.parent() {
            if let Err(e) = std::fs::create_dir_all(parent) {
                return ToolOutput::refused(format!("Cannot create {}: {e}", parent.display()));
            }
        }
        if let Err(e) = std::fs::write(&full, &text) {
            return ToolOutput::refused(format!("Cannot write {}: {e}", rel.display()));
        }
        self.written.insert(rel.clone());
        ToolOutput::ok(format!(
            "Wrote {} (new content on lines {first_line}-{last_line}).",
            rel.display()
        ))
    }

    fn submit_tests(&self, args: SubmitTestsArgs) -> ToolOutput {
        if args.tests.is_empty() {
            return ToolOutput::refused("Submit at least one test.");
        }
        ToolOutput::terminal(
            format!("Submitted {} test(s).", args.tests.len()),
            json!({"tests": args.tests}),
        )
    }
}

impl Toolbox for Toolset<'_> {
    fn specs(&self) -> Vec<ToolSpec> {
        self.names.iter().map(|n| tool_spec(n)).collect()
    }

    fn call(&mut self, name: &str, arguments: &Value) -> ToolOutput {
        if !self.names.contains(&name) {
            return ToolOutput::refused(format!("Unknown tool `{name}`."));
        }
        macro_rules! args {
            ($t:ty) => {
                match parse_args::<$t>(name, arguments) {
                    Ok(a) => a,
                    Err(refusal) => return refusal,
                }
            };
        }
        match name {
            VIEW_FILE => {
                let a = args!(ViewArgs);
                from_result(view_file(
                    &self.jail,
                    &a.path,
                    a.start_line,
                    a.end_line,
                    self.config.page_size as usize,
                ))
            }
            FIND_KEYWORD => {
                let a = args!(FindArgs);
                from_result(find_keyword(
                    &self.jail,
                    &a.query,
                    a.path.as_deref(),
                    a.whole_word,
                    self.config.match_cap as usize,
                ))
            }
            FOLDER_HIERARCHY => {
                let a = args!(HierarchyArgs);
                let depth = a.depth.unwrap_or(self.config.repo_structure_depth as usize);
                from_result(folder_hierarchy(&self.jail, depth, a.path.as_deref()))
            }
            SUBMIT_PATCH => {
                let a = args!(PatchArgs);
                self.submit_patch(a)
            }
            APPLY_PATCH => {
                let a = args!(PatchArgs);
                self.apply_patch(a)
            }
            DEBUGGER => {
                let a = args!(DebuggerArgs);
                match self.debugger.as_deref_mut() {
                    Some(session) => from_result(session.exec(&a.command)),
                    None => ToolOutput::refused("No debugger is attached."),
                }
            }
            SUBMIT_REPORT => {
                let a = args!(ReportArgs);
                if a.report.trim().is_empty() {
                    ToolOutput::refused("The report is empty.")
                } else {
                    ToolOutput::terminal("Report submitted.", json!({"report": a.report}))
                }
            }
            EVALUATE_TESTS => {
                let a = args!(EvaluateArgs);
                self.evaluate_tests(a)
            }
            WRITE_TEST => {
                let a = args!(WriteArgs);
                self.write_test(a)
            }
            SUBMIT_TESTS => {
                let a = args!(SubmitTestsArgs);
                self.submit_tests(a)
            }
            other => ToolOutput::refused(format!("Unknown tool `{other}`.")),
        }
    }
}
