//! Issue description and test manifest types.
//!
//! A manifest lists the individually runnable tests for one instance. Which of
//! them fail initially is not declared by hand: it is established by running
//! every test against the pristine snapshot (see [`TestManifest::with_initial_state`]).

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::sandbox::TestState;

/// Placeholder substituted with the test name in runner command templates.
pub const TEST_NAME_PLACEHOLDER: &str = "{test_name}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueSpec {
    pub description: String,
    pub repo_root: PathBuf,
    pub test_command_template: String,
}

impl IssueSpec {
    pub fn new(
        description: impl Into<String>,
        repo_root: impl Into<PathBuf>,
        test_command_template: impl Into<String>,
    ) -> Result<Self> {
        let issue = IssueSpec {
            description: description.into(),
            repo_root: repo_root.into(),
            test_command_template: test_command_template.into(),
        };
        issue.validate()?;
        Ok(issue)
    }

    pub fn validate(&self) -> Result<()> {
        if self.description.trim().is_empty() {
            return Err(Error::InvalidInstance("issue description is empty".into()));
        }
        if !self.repo_root.is_dir() {
            return Err(Error::InvalidInstance(format!(
                "repo root {} is not a directory",
                self.repo_root.display()
            )));
        }
        validate_command_template(&self.test_command_template)
    }
}

pub fn validate_command_template(template: &str) -> Result<()> {
    let count = template.matches(TEST_NAME_PLACEHOLDER).count();
    if count != 1 {
        return Err(Error::InvalidInstance(format!(
            "test command template must contain exactly one {TEST_NAME_PLACEHOLDER} placeholder, found {count}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Reproduction,
    Regression,
}

impl TestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::Reproduction => "reproduction",
            TestKind::Regression => "regression",
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Who wrote a test. Only `Llm` tests enter bad-test-rate statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestOrigin {
    #[default]
    Human,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestRef {
    /// Runner-qualified identifier, e.g. `tests/test_stats.py::test_median`.
    pub name: String,
    /// Repo-relative path of the file holding the test.
    pub file: PathBuf,
    /// 1-based line of the test definition.
    pub line: usize,
    /// Verbatim source of the test. Extracted from `file` at `line` when the
    /// manifest file leaves it empty.
    #[serde(default)]
    pub source: String,
    pub kind: TestKind,
    #[serde(default)]
    pub origin: TestOrigin,
}

impl TestRef {
    fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::InvalidManifest("test with empty name".into()));
        }
        if self.line == 0 {
            return Err(Error::InvalidManifest(format!(
                "{}: line numbers are 1-based",
                self.name
            )));
        }
        if !is_repo_relative(&self.file) {
            return Err(Error::InvalidManifest(format!(
                "{}: file {} is not inside the repository",
                self.name,
                self.file.display()
            )));
        }
        if self.source.trim().is_empty() {
            return Err(Error::InvalidManifest(format!("{}: empty source", self.name)));
        }
        Ok(())
    }
}

/// True for relative paths with no `..`, root or prefix components.
pub fn is_repo_relative(path: &Path) -> bool {
    !path.as_os_str().is_empty()
        && path
            .components()
            .all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestManifest {
    pub tests: Vec<TestRef>,
    /// Names of tests failing on the initial snapshot.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failing: Vec<String>,
    /// Names of tests passing on the initial snapshot.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub passing: Vec<String>,
}

impl TestManifest {
    pub fn new(tests: Vec<TestRef>) -> Result<Self> {
        let manifest = TestManifest {
            tests,
            failing: Vec::new(),
            passing: Vec::new(),
        };
        manifest.validate_tests()?;
        Ok(manifest)
    }

    /// Loads a manifest file, filling empty `source` fields from the repo.
    pub fn load(path: &Path, repo_root: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let mut manifest: TestManifest =
            serde_json::from_str(&text).map_err(|e| Error::InvalidManifest(format!("{}: {e}", path.display())))?;
        manifest.fill_sources(repo_root)?;
        manifest.validate_tests()?;
        if !manifest.failing.is_empty() || !manifest.passing.is_empty() {
            manifest.validate_partition()?;
        }
        Ok(manifest)
    }

    pub fn fill_sources(&mut self, repo_root: &Path) -> Result<()> {
        for test in &mut self.tests {
            if !test.source.trim().is_empty() {
                continue;
            }
            if !is_repo_relative(&test.file) {
                continue;
            }
            let path = repo_root.join(&test.file);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::InvalidManifest(format!("{}: cannot read {}: {e}", test.name, path.display())))?;
            test.source = extract_test_source(&text, test.line).ok_or_else(|| {
                Error::InvalidManifest(format!(
                    "{}: line {} is outside {}",
                    test.name,
                    test.line,
                    test.file.display()
                ))
            })?;
        }
        Ok(())
    }

    fn validate_tests(&self) -> Result<()> {
        let mut names = HashSet::new();
        for test in &self.tests {
            test.validate()?;
            if !names.insert(test.name.as_str()) {
                return Err(Error::InvalidManifest(format!("duplicate test name {}", test.name)));
            }
        }
        Ok(())
    }

    fn validate_partition(&self) -> Result<()> {
        let all: BTreeSet<&str> = self.tests.iter().map(|t| t.name.as_str()).collect();
        let failing: BTreeSet<&str> = self.failing.iter().map(String::as_str).collect();
        let passing: BTreeSet<&str> = self.passing.iter().map(String::as_str).collect();
        if !failing.is_disjoint(&passing) {
            return Err(Error::InvalidManifest(
                "a test is listed as both failing and passing".into(),
            ));
        }
        let union: BTreeSet<&str> = failing.union(&passing).copied().collect();
        if union != all {
            return Err(Error::InvalidManifest(
                "failing and passing sets do not cover the manifest".into(),
            ));
        }
        for test in self.reproduction_tests() {
            if !failing.contains(test.name.as_str()) {
                return Err(Error::InvalidInstance(format!(
                    "reproduction test {} passes on the initial snapshot",
                    test.name
                )));
            }
        }
        Ok(())
    }

    /// Records the initial failing/passing partition from a test run.
    pub fn with_initial_state(mut self, state: &TestState) -> Result<Self> {
        self.failing.clear();
        self.passing.clear();
        for test in &self.tests {
            let outcome = state
                .outcome(&test.name)
                .ok_or_else(|| Error::InvalidManifest(format!("no initial outcome for {}", test.name)))?;
            if outcome.is_pass() {
                self.passing.push(test.name.clone());
            } else {
                self.failing.push(test.name.clone());
            }
        }
        self.validate_partition()?;
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Option<&TestRef> {
        self.tests.iter().find(|t| t.name == name)
    }

    pub fn reproduction_tests(&self) -> impl Iterator<Item = &TestRef> {
        self.tests.iter().filter(|t| t.kind == TestKind::Reproduction)
    }

    pub fn is_initially_passing(&self, name: &str) -> bool {
        self.passing.iter().any(|n| n == name)
    }

    pub fn test_files(&self) -> BTreeSet<PathBuf> {
        self.tests.iter().map(|t| t.file.clone()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        crate::util::write_atomic(path, format!("{text}\n").as_bytes())
    }
}

/// Extracts the block starting at 1-based `line`: the line itself plus every
/// following line that is blank or indented deeper than it. Trailing blank
/// lines are dropped. Decorator lines directly above a Python definition are
/// not included.
pub fn extract_test_source(file_text: &str, line: usize) -> Option<String> {
    let lines: Vec<&str> = file_text.lines().collect();
    let first = *lines.get(line.checked_sub(1)?)?;
    let indent = indentation(first);
    let mut block = vec![first];
    for l in &lines[line..] {
        if l.trim().is_empty() || indentation(l) > indent {
            block.push(l);
        } else {
            break;
        }
    }
    while block.len() > 1 && block.last().is_some_and(|l| l.trim().is_empty()) {
        block.pop();
    }
    Some(block.join("\n"))
}

fn indentation(line: &str) -> usize {
    line.len() - line.trim_start().len()
}
