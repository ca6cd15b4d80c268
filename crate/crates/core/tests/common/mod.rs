#![allow(dead_code)]

pub mod oracles;
pub mod suites;

use std::path::{Path, PathBuf};

use testfix_core::agent::ScriptedProvider;
use testfix_core::audit::{to_jsonl, AuditLog, LogicalClock};
use testfix_core::{IssueSpec, RunResult, TestManifest, Workflow, WorkflowConfig};

pub const TEST_COMMAND: &str = "python3 run_tests.py {test_name}";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            if entry.file_name() == "__pycache__" {
                continue;
            }
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), &target).unwrap();
        }
    }
}

/// Fresh copy of the median fixture repository.
pub fn repo() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixtures().join("median_repo"), dir.path());
    dir
}

pub fn issue(repo: &Path) -> IssueSpec {
    let text = std::fs::read_to_string(fixtures().join("issue.md")).unwrap();
    IssueSpec::new(text, repo, TEST_COMMAND).unwrap()
}

pub fn manifest(repo: &Path) -> TestManifest {
    TestManifest::load(&fixtures().join("manifest.json"), repo).unwrap()
}

pub fn script(name: &str) -> ScriptedProvider {
    ScriptedProvider::load(&fixtures().join("scripts").join(format!("{name}.json"))).unwrap()
}

pub fn gold_patch() -> String {
    std::fs::read_to_string(fixtures().join("gold.patch")).unwrap()
}

pub fn shim_command(mode: &str) -> String {
    format!(
        "python3 {} --mode {mode} {{test_name}}",
        fixtures().join("stub_shim.py").display()
    )
}

pub fn fast_config() -> WorkflowConfig {
    WorkflowConfig {
        provider_backoff_ms: 0,
        ..WorkflowConfig::default()
    }
}

pub struct Run {
    pub result: testfix_core::Result<RunResult>,
    pub jsonl: String,
}

/// Runs the workflow on a fresh fixture copy with a logical clock.
pub fn run_fixture(script_name: &str, config: &WorkflowConfig, debugger: bool) -> Run {
    let dir = repo();
    let issue = issue(dir.path());
    let manifest = manifest(dir.path());
    let provider = script(script_name);
    let audit = AuditLog::in_memory(Box::new(LogicalClock::default()));
    let shim = shim_command("normal");
    let wf = Workflow {
        issue: &issue,
        manifest: &manifest,
        config,
        provider: &provider,
        debugger_command: debugger.then_some(shim.as_str()),
        audit: &audit,
    };
    let result = wf.run();
    Run {
        result,
        jsonl: to_jsonl(&audit.records()),
    }
}
