use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::command::{DebugCommand, Verb};
use super::transport::{ProcessShim, RecvError, ShimTransport};
use crate::config::WorkflowConfig;
use crate::error::{Error, Result};
use crate::manifest::TEST_NAME_PLACEHOLDER;
use crate::sandbox::redact_root;

/// Outbound request frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestFrame {
    pub id: u64,
    pub verb: String,
    pub arg: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShimStateKind {
    Running,
    Paused,
    Finished,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShimState {
    pub kind: ShimStateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
}

/// Inbound reply frame. The shim's greeting uses id 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyFrame {
    pub id: u64,
    #[serde(default)]
    pub output: String,
    pub state: ShimState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionState {
    Running,
    AtBreakpoint { file: String, line: u64 },
    Finished,
    Dead(String),
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionState::Running => f.write_str("running"),
            SessionState::AtBreakpoint { file, line } => write!(f, "paused at {file}:{line}"),
            SessionState::Finished => f.write_str("finished (use `restart` to run the test again)"),
            SessionState::Dead(reason) => write!(f, "dead: {reason}"),
        }
    }
}

fn map_state(state: &ShimState) -> SessionState {
    match state.kind {
        ShimStateKind::Running => SessionState::Running,
        ShimStateKind::Paused => SessionState::AtBreakpoint {
            file: state.file.clone().unwrap_or_else(|| "<unknown>".into()),
            line: state.line.unwrap_or(0),
        },
        ShimStateKind::Finished | ShimStateKind::Error => SessionState::Finished,
    }
}

/// Builds shim processes from a command template such as
/// `python3 -m shim {test_name}`.
#[derive(Debug, Clone)]
pub struct DebuggerLauncher {
    template: Vec<String>,
    env: Vec<(String, String)>,
    timeout: Duration,
}

impl DebuggerLauncher {
    pub fn new(template: &str, env: Vec<(String, String)>, config: &WorkflowConfig) -> Result<Self> {
        crate::manifest::validate_command_template(template)
            .map_err(|e| Error::Debugger(format!("debugger command: {e}")))?;
        let tokens = shlex::split(template)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| Error::Debugger(format!("cannot tokenize debugger command {template:?}")))?;
        Ok(DebuggerLauncher {
            template: tokens,
            env,
            timeout: Duration::from_secs(config.debug_command_timeout_secs),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Starts a session on `test_name` inside `root`. Spawn failures yield a
    /// dead session carrying the error.
    pub fn launch(&self, root: &Path, test_name: &str) -> DebugSession {
        let argv: Vec<String> = self
            .template
            .iter()
            .map(|t| t.replace(TEST_NAME_PLACEHOLDER, test_name))
            .collect();
        match ProcessShim::spawn(&argv, root, &self.env) {
            Ok(shim) => DebugSession::start(Box::new(shim), self.timeout, Some(root.to_path_buf())),
            Err(e) => DebugSession::dead(format!("could not start debugger {:?}: {e}", argv[0])),
        }
    }
}

/// Driver side of one debugger session.
pub struct DebugSession {
    transport: Option<Box<dyn ShimTransport>>,
    state: SessionState,
    next_id: u64,
    timeout: Duration,
    breakpoints: Vec<String>,
    root: Option<PathBuf>,
    initial: String,
}

impl fmt::Debug for DebugSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DebugSession")
            .field("state", &self.state)
            .field("next_id", &self.next_id)
            .finish_non_exhaustive()
    }
}

impl DebugSession {
    /// Waits for the shim's greeting frame.
    pub fn start(transport: Box<dyn ShimTransport>, timeout: Duration, root: Option<PathBuf>) -> Self {
        let mut session = DebugSession {
            transport: Some(transport),
            state: SessionState::Running,
            next_id: 1,
            timeout,
            breakpoints: Vec::new(),
            root,
            initial: String::new(),
        };
        match session.read_frame(0) {
            Ok(frame) => {
                session.state = map_state(&frame.state);
                session.initial = session.render(&frame.output);
            }
            Err(reason) => {
                session.kill(reason.clone());
                session.initial = session.render("");
            }
        }
        session
    }

    pub fn dead(reason: impl Into<String>) -> Self {
        let reason = reason.into();
        DebugSession {
            transport: None,
            state: SessionState::Dead(reason.clone()),
            next_id: 1,
            timeout: Duration::ZERO,
            breakpoints: Vec::new(),
            root: None,
            initial: format!("[debugger state: dead: {reason}]"),
        }
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn is_dead(&self) -> bool {
        matches!(self.state, SessionState::Dead(_))
    }

    /// Rendered state at session start, for the Debug One prompt.
    pub fn initial_context(&self) -> &str {
        &self.initial
    }

    /// Breakpoint definitions accepted so far.
    pub fn breakpoints(&self) -> &[String] {
        &self.breakpoints
    }

    /// Runs one command line. `Err` carries a rejection or the reason the
    /// session is unusable; nothing reaches the shim in that case.
    pub fn exec(&mut self, line: &str) -> std::result::Result<String, String> {
        if let SessionState::Dead(reason) = &self.state {
            return Err(format!("The debugger session is no longer available ({reason})."));
        }
        let cmd = DebugCommand::parse(line)?;
        let id = self.next_id;
        self.next_id += 1;
        let frame = RequestFrame {
            id,
            verb: cmd.verb.as_str().to_string(),
            arg: cmd.arg.clone(),
        };
        let text = serde_json::to_string(&frame).expect("frames serialize");
        let sent = self
            .transport
            .as_mut()
            .map(|t| t.send(&text))
            .unwrap_or_else(|| Err(std::io::ErrorKind::BrokenPipe.into()));
        if let Err(e) = sent {
            let reason = format!("debugger process is gone: {e}");
            self.kill(reason.clone());
            return Err(format!("The debugger session ended ({reason})."));
        }
        match self.read_frame(id) {
            Ok(reply) => {
                if cmd.verb == Verb::Break {
                    if let Some(arg) = &cmd.arg {
                        self.breakpoints.push(arg.clone());
                    }
                }
                self.state = map_state(&reply.state);
                Ok(self.render(&reply.output))
            }
            Err(reason) => {
                self.kill(reason.clone());
                Err(format!("The debugger session ended ({reason})."))
            }
        }
    }

    /// Terminates the shim. Safe to call repeatedly.
    pub fn close(&mut self) {
        if let Some(mut t) = self.transport.take() {
            t.close();
        }
        if !self.is_dead() {
            self.state = SessionState::Dead("closed".into());
        }
    }

    fn read_frame(&mut self, expected_id: u64) -> std::result::Result<ReplyFrame, String> {
        let transport = self.transport.as_mut().ok_or("no debugger process")?;
        let line = match transport.recv(self.timeout) {
            Ok(line) => line,
            Err(RecvError::Timeout) => {
                return Err(format!(
                    "no reply within {}s; session terminated",
                    self.timeout.as_secs_f64()
                ))
            }
            Err(RecvError::Closed) => {
                let diag = transport.diagnostics();
                let diag = diag.trim();
                return Err(if diag.is_empty() {
                    "debugger process exited".into()
                } else {
                    format!("debugger process exited:\n{diag}")
                });
            }
        };
        let frame: ReplyFrame =
            serde_json::from_str(&line).map_err(|e| format!("malformed frame from debugger: {e}"))?;
        if frame.id != expected_id {
            return Err(format!(
                "protocol error: expected reply {expected_id}, got {}",
                frame.id
            ));
        }
        Ok(frame)
    }

    fn kill(&mut self, reason: String) {
        if let Some(mut t) = self.transport.take() {
            t.close();
        }
        self.state = SessionState::Dead(reason);
    }

    fn render(&self, output: &str) -> String {
        let output = match &self.root {
            Some(root) => redact_root(output, root),
            None => output.to_string(),
        };
        let state = match &self.state {
            SessionState::AtBreakpoint { file, line } => {
                let file = match &self.root {
                    Some(root) => redact_root(file, root),
                    None => file.clone(),
                };
                format!("paused at {file}:{line}")
            }
            other => other.to_string(),
        };
        let mut text = output.trim_end().to_string();
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(&format!("[debugger state: {state}]"));
        text
    }
}

impl Drop for DebugSession {
    fn drop(&mut self) {
        self.close();
    }
}
