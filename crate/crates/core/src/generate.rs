//! Optional entry phase: let an agent write reproduction tests, keep the ones
//! that resolve and currently fail, and register them in the manifest.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agent::prompts::{bindings, GENERATE_TESTS_SYSTEM, GENERATE_TESTS_USER};
use crate::agent::{run_subagent, AgentEnv, EpisodeTag, Phase, Provider, StopReason, SubAgentSpec, Usage};
use crate::audit::{AuditEvent, AuditLog, RecordKind};
use crate::config::WorkflowConfig;
use crate::error::{Error, IoContext, Result};
use crate::manifest::{
    extract_test_source, is_repo_relative, IssueSpec, TestKind, TestManifest, TestOrigin, TestRef,
    TEST_NAME_PLACEHOLDER,
};
use crate::sandbox::{Snapshot, TestRunner, TestStatus};
use crate::tools::{terminal_tool, SubmittedTest, TestGuard, Toolset};
use crate::util::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedTest {
    pub test: TestRef,
    /// Exactly one assertion statement in the test body.
    pub single_assert: bool,
    /// Status on the initial snapshot: failed or errored.
    pub initial_status: TestStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discarded {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateOutcome {
    pub accepted: Vec<GeneratedTest>,
    pub discarded: Vec<Discarded>,
    /// Test files written by the agent, with their final contents.
    pub files: Vec<(PathBuf, String)>,
    pub usage: Usage,
    pub turns_used: u32,
}

/// The test command without its placeholder, as shown to the agent.
pub fn command_prefix(template: &str) -> String {
    template
        .replace(TEST_NAME_PLACEHOLDER, "")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn assert_count(source: &str) -> usize {
    static R: OnceLock<Regex> = OnceLock::new();
    let re = R.get_or_init(|| Regex::new(r"^\s*(assert\b|self\.assert\w*\(|assert_eq!|assert!|expect\()").unwrap());
    source.lines().filter(|l| re.is_match(l)).count()
}

/// Last identifier-like segment of a runner test name, e.g. `test_a` in
/// `tests/test_x.py::TestK::test_a`.
fn leaf_name(name: &str) -> Option<&str> {
    let leaf = name.rsplit([':', '.', '/', '#']).next()?;
    let leaf = leaf.split('[').next()?;
    let ok = !leaf.is_empty()
        && leaf.chars().all(|c| c.is_alphanumeric() || c == '_')
        && !leaf.starts_with(|c: char| c.is_ascii_digit());
    ok.then_some(leaf)
}

fn file_part(name: &str) -> Option<&str> {
    name.split_once("::").map(|(f, _)| f)
}

fn resolve(sub: &SubmittedTest, root: &Path) -> std::result::Result<(PathBuf, String), String> {
    let file = PathBuf::from(sub.file.trim_start_matches("/home/repo/"));
    if !is_repo_relative(&file) {
        return Err(format!("file {} is not inside the repository", sub.file));
    }
    if let Some(f) = file_part(&sub.name) {
        if Path::new(f) != file {
            return Err(format!("test name refers to {f} but the file is {}", file.display()));
        }
    }
    let Some(leaf) = leaf_name(&sub.name) else {
        return Err(format!("cannot resolve test name {:?}", sub.name));
    };
    let text = std::fs::read_to_string(root.join(&file)).map_err(|e| format!("cannot read {}: {e}", file.display()))?;
    let source =
        extract_test_source(&text, sub.line).ok_or_else(|| format!("{} has no line {}", file.display(), sub.line))?;
    let first = source.lines().next().unwrap_or("");
    let defines = Regex::new(&format!(r"\b{}\b", regex::escape(leaf))).expect("escaped");
    if !defines.is_match(first) {
        return Err(format!(
            "line {} of {} does not define {leaf}: {:?}",
            sub.line,
            file.display(),
            first.trim()
        ));
    }
    Ok((file, source))
}

pub struct GenerateRequest<'a> {
    pub issue: &'a IssueSpec,
    pub manifest: &'a TestManifest,
    pub config: &'a WorkflowConfig,
    pub provider: &'a dyn Provider,
    pub audit: &'a AuditLog,
    /// Existing test used to show the name format; defaults to the first
    /// manifest test.
    pub example: Option<&'a TestRef>,
}

/// Runs the Generate Tests agent on a copy of the repository. Nothing in the
/// repository changes; see [`persist_generated`].
pub fn generate_tests(req: &GenerateRequest<'_>) -> Result<GenerateOutcome> {
    req.issue.validate()?;
    let example = req
        .example
        .or_else(|| req.manifest.tests.first())
        .ok_or_else(|| Error::GenerateTests("an example test is needed to show the test name format".into()))?;
    let snapshot = Snapshot::capture(&req.issue.repo_root)?;
    let copy = snapshot.checkout(None, 0)?;
    let runner = TestRunner::new(&req.issue.test_command_template, req.config)?;
    let guard = TestGuard::new(req.manifest, req.config)?;

    let spec = SubAgentSpec {
        phase: Phase::GenerateTests,
        system_template: GENERATE_TESTS_SYSTEM,
        user_template: GENERATE_TESTS_USER,
        max_turns: req.config.max_turns(Phase::GenerateTests),
        terminal_tool: terminal_tool(Phase::GenerateTests),
    };
    let binds = bindings([
        ("issue", req.issue.description.clone()),
        ("test_cmd", command_prefix(&req.issue.test_command_template)),
        ("test_example", example.name.clone()),
        ("test_example_file", example.file.display().to_string()),
    ]);
    let env = AgentEnv {
        provider: req.provider,
        temperature: req.config.temperature,
        provider_attempts: req.config.provider_attempts,
        provider_backoff: Duration::from_millis(req.config.provider_backoff_ms),
    };
    let (transcript, written) = {
        let mut tools = Toolset::generate(copy.root(), req.config, &guard, &runner, Some(&example.file))?;
        let tag = EpisodeTag::new(Phase::GenerateTests, 0, 0);
        let t = run_subagent(&env, &spec, &binds, &mut tools, tag, req.audit)?;
        (t, tools.written_files().clone())
    };
    if transcript.stop_reason == StopReason::ProviderError {
        return Err(Error::Provider(transcript.provider_error.unwrap_or_default()));
    }
    let submitted: Vec<SubmittedTest> = match (&transcript.stop_reason, &transcript.output) {
        (StopReason::Terminal, Some(out)) => serde_json::from_value(out.get("tests").cloned().unwrap_or(Value::Null))?,
        _ => Vec::new(),
    };

    let mut accepted = Vec::new();
    let mut discarded = Vec::new();
    let mut seen: BTreeSet<String> = req.manifest.tests.iter().map(|t| t.name.clone()).collect();
    for sub in submitted {
        let verdict = (|| {
            if !seen.insert(sub.name.clone()) {
                return Err(format!("name {} is already in use", sub.name));
            }
            let (file, source) = resolve(&sub, copy.root())?;
            if !written.contains(&file) {
                return Err(format!("{} was not written in this session", file.display()));
            }
            let outcome = runner.run_test(copy.root(), &sub.name);
            match outcome.status {
                TestStatus::Passed => Err("passes on the initial snapshot, so it does not reproduce the issue".into()),
                TestStatus::Timeout => Err("timed out on the initial snapshot".into()),
                status => Ok((file, source, status)),
            }
        })();
        match verdict {
            Ok((file, source, status)) => {
                let n = assert_count(&source);
                if n != 1 {
                    tracing::warn!(test = %sub.name, asserts = n, "generated test does not have exactly one assertion");
                }
                if status == TestStatus::Errored {
                    tracing::warn!(test = %sub.name, "generated test errors rather than fails on the initial snapshot");
                }
                accepted.push(GeneratedTest {
                    test: TestRef {
                        name: sub.name,
                        file,
                        line: sub.line,
                        source,
                        kind: TestKind::Reproduction,
                        origin: TestOrigin::Llm,
                    },
                    single_assert: n == 1,
                    initial_status: status,
                });
            }
            Err(reason) => {
                tracing::info!(test = %sub.name, %reason, "generated test discarded");
                discarded.push(Discarded { name: sub.name, reason });
            }
        }
    }
    req.audit.commit([AuditEvent::new(
        Phase::GenerateTests.as_str(),
        0,
        RecordKind::PhaseTransition,
        json!({
            "event": "tests_screened",
            "accepted": accepted.iter().map(|g| json!({"name": g.test.name, "status": g.initial_status, "single_assert": g.single_assert})).collect::<Vec<_>>(),
            "discarded": discarded,
        }),
    )]);
    if accepted.is_empty() {
        let why = if discarded.is_empty() {
            format!("the agent submitted no tests (stopped: {:?})", transcript.stop_reason)
        } else {
            discarded
                .iter()
                .map(|d| format!("{}: {}", d.name, d.reason))
                .collect::<Vec<_>>()
                .join("; ")
        };
        return Err(Error::GenerateTests(format!("no registrable tests: {why}")));
    }
    let files = written
        .iter()
        .map(|f| {
            let p = copy.root().join(f);
            std::fs::read_to_string(&p).at(&p).map(|t| (f.clone(), t))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GenerateOutcome {
        accepted,
        discarded,
        files,
        usage: transcript.usage,
        turns_used: transcript.turns_used,
    })
}

/// Adds generated tests to the manifest as initially failing reproduction
/// tests. Fails on a name collision.
pub fn register_tests(manifest: &TestManifest, generated: &[GeneratedTest]) -> Result<TestManifest> {
    let mut out = manifest.clone();
    for g in generated {
        if out.get(&g.test.name).is_some() {
            return Err(Error::InvalidManifest(format!(
                "test {} is already in the manifest",
                g.test.name
            )));
        }
        out.tests.push(g.test.clone());
        if !out.failing.is_empty() || !out.passing.is_empty() {
            out.failing.push(g.test.name.clone());
        }
    }
    TestManifest::new(out.tests.clone())?;
    Ok(out)
}

/// Writes the generated test files into `repo_root` and the extended manifest
/// to `manifest_path`.
pub fn persist_generated(
    repo_root: &Path,
    outcome: &GenerateOutcome,
    manifest: &TestManifest,
    manifest_path: &Path,
) -> Result<()> {
    for (file, text) in &outcome.files {
        let path = repo_root.join(file);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).at(parent)?;
        }
        write_atomic(&path, text.as_bytes())?;
    }
    manifest.save(manifest_path)
}
