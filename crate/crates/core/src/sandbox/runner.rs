use std::collections::BTreeMap;
use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::config::WorkflowConfig;
use crate::error::{Error, Result};
use crate::manifest::{TestManifest, TEST_NAME_PLACEHOLDER};

use super::snapshot::redact_root;

/// Captured output kept per test; longer output keeps its tail.
const MAX_MESSAGE_BYTES: usize = 32 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Passed,
    Failed,
    Errored,
    Timeout,
}

impl TestStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TestStatus::Passed => "passed",
            TestStatus::Failed => "failed",
            TestStatus::Errored => "errored",
            TestStatus::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub status: TestStatus,
    /// Runner output with working-copy paths redacted.
    pub message: String,
    pub duration_secs: f64,
}

impl TestOutcome {
    pub fn new(status: TestStatus, message: impl Into<String>, duration_secs: f64) -> Self {
        TestOutcome {
            status,
            message: message.into(),
            duration_secs,
        }
    }

    pub fn is_pass(&self) -> bool {
        self.status == TestStatus::Passed
    }
}

/// Outcome of every test in one run, keyed by test name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TestState {
    pub outcomes: BTreeMap<String, TestOutcome>,
}

impl TestState {
    pub fn insert(&mut self, name: impl Into<String>, outcome: TestOutcome) {
        self.outcomes.insert(name.into(), outcome);
    }

    pub fn outcome(&self, name: &str) -> Option<&TestOutcome> {
        self.outcomes.get(name)
    }

    pub fn passes(&self, name: &str) -> bool {
        self.outcome(name).is_some_and(TestOutcome::is_pass)
    }

    /// Names of tests that did not pass, in name order.
    pub fn failing(&self) -> impl Iterator<Item = &str> {
        self.outcomes
            .iter()
            .filter(|(_, o)| !o.is_pass())
            .map(|(n, _)| n.as_str())
    }

    pub fn passing(&self) -> impl Iterator<Item = &str> {
        self.outcomes
            .iter()
            .filter(|(_, o)| o.is_pass())
            .map(|(n, _)| n.as_str())
    }

    /// Captured output of each failing test.
    pub fn error_messages(&self) -> BTreeMap<&str, &str> {
        self.outcomes
            .iter()
            .filter(|(_, o)| !o.is_pass())
            .map(|(n, o)| (n.as_str(), o.message.as_str()))
            .collect()
    }

    /// Compact name → status view, used by audit records.
    pub fn statuses(&self) -> BTreeMap<&str, TestStatus> {
        self.outcomes.iter().map(|(n, o)| (n.as_str(), o.status)).collect()
    }
}

/// Runs single tests through the instance's command template.
#[derive(Debug, Clone)]
pub struct TestRunner {
    template: Vec<String>,
    env: Vec<(String, String)>,
    timeout: Duration,
    error_exit_codes: Vec<i32>,
    error_markers: Vec<String>,
}

impl TestRunner {
    pub fn new(template: &str, config: &WorkflowConfig) -> Result<Self> {
        crate::manifest::validate_command_template(template)?;
        let tokens = shlex::split(template)
            .ok_or_else(|| Error::InvalidInstance(format!("cannot tokenize test command {template:?}")))?;
        if tokens.is_empty() {
            return Err(Error::InvalidInstance("empty test command".into()));
        }
        let mut env: Vec<(String, String)> = config
            .env_allowlist
            .iter()
            .filter_map(|k| std::env::var(k).ok().map(|v| (k.clone(), v)))
            .collect();
        env.extend(config.test_env.iter().map(|(k, v)| (k.clone(), v.clone())));
        Ok(TestRunner {
            template: tokens,
            env,
            timeout: Duration::from_secs(config.test_timeout_secs),
            error_exit_codes: config.error_exit_codes.clone(),
            error_markers: config.error_markers.clone(),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Environment given to test processes.
    pub fn env(&self) -> &[(String, String)] {
        &self.env
    }

    /// argv for one test. The name is substituted inside its token, so it is
    /// never re-split by a shell.
    pub fn argv(&self, test_name: &str) -> Vec<String> {
        self.template
            .iter()
            .map(|t| t.replace(TEST_NAME_PLACEHOLDER, test_name))
            .collect()
    }

    /// Human-readable command line, as shown to agents.
    pub fn command_line(&self, test_name: &str) -> String {
        let argv = self.argv(test_name);
        shlex::try_join(argv.iter().map(String::as_str)).unwrap_or_else(|_| argv.join(" "))
    }

    pub fn run_test(&self, root: &Path, test_name: &str) -> TestOutcome {
        let start = Instant::now();
        let argv = self.argv(test_name);
        let mut cmd = Command::new(&argv[0]);
        cmd.args(&argv[1..])
            .current_dir(root)
            .env_clear()
            .envs(self.env.iter().map(|(k, v)| (k, v)))
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0);
        let mut child = match cmd.spawn() {
            Ok(child) => child,
            Err(e) => {
                return TestOutcome::new(
                    TestStatus::Errored,
                    format!("could not start test command {:?}: {e}", argv[0]),
                    start.elapsed().as_secs_f64(),
                )
            }
        };
        let pgid = child.id() as i32;
        let out_reader = spawn_reader(child.stdout.take());
        let err_reader = spawn_reader(child.stderr.take());

        let deadline = start + self.timeout;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if Instant::now() >= deadline => break None,
                Ok(None) => thread::sleep(Duration::from_millis(5)),
                Err(_) => break None,
            }
        };
        // Take down anything the test left behind so the pipes close.
        kill_group(pgid);
        if status.is_none() {
            let _ = child.wait();
        }
        let mut output = out_reader.join().unwrap_or_default();
        output.extend(err_reader.join().unwrap_or_default());
        let text = redact_root(&String::from_utf8_lossy(&output), root);
        let elapsed = start.elapsed().as_secs_f64();

        let Some(status) = status else {
            let msg = format!("test timed out after {}s\n{}", self.timeout.as_secs_f64(), tail(&text));
            return TestOutcome::new(TestStatus::Timeout, msg, elapsed);
        };
        let verdict = match status.code() {
            Some(0) => TestStatus::Passed,
            Some(code) if self.error_exit_codes.contains(&code) => TestStatus::Errored,
            None => TestStatus::Errored,
            Some(_) if self.error_markers.iter().any(|m| text.contains(m.as_str())) => TestStatus::Errored,
            Some(_) => TestStatus::Failed,
        };
        let mut message = tail(&text);
        if verdict != TestStatus::Passed && message.trim().is_empty() {
            message = match status.code() {
                Some(code) => format!("test command exited with status {code}"),
                None => "test command was terminated by a signal".into(),
            };
        }
        TestOutcome::new(verdict, message, elapsed)
    }

    /// Runs `names` sequentially in `root`.
    pub fn run_all<'a>(&self, root: &Path, names: impl IntoIterator<Item = &'a str>) -> TestState {
        let mut state = TestState::default();
        for name in names {
            let outcome = self.run_test(root, name);
            tracing::debug!(test = name, status = outcome.status.as_str(), "test finished");
            state.insert(name, outcome);
        }
        state
    }

    /// Runs the whole manifest `repeats` times and requires identical statuses
    /// across runs. Returns the first run.
    pub fn run_stable(&self, root: &Path, manifest: &TestManifest, repeats: usize) -> Result<TestState> {
        let names: Vec<&str> = manifest.tests.iter().map(|t| t.name.as_str()).collect();
        let first = self.run_all(root, names.iter().copied());
        for _ in 1..repeats.max(1) {
            let again = self.run_all(root, names.iter().copied());
            for name in &names {
                let (a, b) = (first.outcome(name), again.outcome(name));
                if a.map(|o| o.status) != b.map(|o| o.status) {
                    return Err(Error::InvalidInstance(format!(
                        "test {name} is not deterministic on the initial snapshot ({} then {})",
                        a.map_or("missing", |o| o.status.as_str()),
                        b.map_or("missing", |o| o.status.as_str()),
                    )));
                }
            }
        }
        Ok(first)
    }
}

fn spawn_reader<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut pipe) = pipe {
            let _ = pipe.read_to_end(&mut buf);
        }
        buf
    })
}

fn kill_group(pgid: i32) {
    if pgid > 0 {
        // SAFETY: plain syscall; a stale group id only yields ESRCH.
        unsafe {
            libc::kill(-pgid, libc::SIGKILL);
        }
    }
}

fn tail(text: &str) -> String {
    if text.len() <= MAX_MESSAGE_BYTES {
        return text.to_string();
    }
    let mut cut = text.len() - MAX_MESSAGE_BYTES;
    while !text.is_char_boundary(cut) {
        cut += 1;
    }
    format!("[... output truncated ...]\n{}", &text[cut..])
}
