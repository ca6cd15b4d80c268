//! The repair loop: propose a global patch, apply it (revising once if it
//! does not apply), run every test, debug the failures, repeat.
//!
//! Every patch is a diff against the initial snapshot. Each phase works in a
//! fresh working copy, so no attempt can see the side effects of another.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agent::prompts::{
    bindings, DEBUG_ONE_SYSTEM, DEBUG_ONE_USER, EXPLORE_FILES_SYSTEM, EXPLORE_FILES_USER, EXPLORE_FILES_USER_INITIAL,
    REVISE_PATCH_SYSTEM, REVISE_PATCH_USER,
};
use crate::agent::{
    run_subagent, AgentEnv, AgentTranscript, EpisodeTag, Phase, Provider, StopReason, SubAgentSpec, Usage,
};
use crate::audit::{AuditEvent, AuditLog, EventBuffer, EventSink, RecordKind};
use crate::config::WorkflowConfig;
use crate::debugger::DebuggerLauncher;
use crate::error::{Error, Result};
use crate::manifest::{IssueSpec, TestKind, TestManifest, TestRef};
use crate::metrics::{default_profiles, screen_patch, verdict, HackVerdict, ScreenContext};
use crate::patch::{parse_patch, MemTree, Patch};
use crate::sandbox::{Snapshot, TestOutcome, TestRunner, TestState, WorkingCopy};
use crate::tools::{folder_hierarchy, terminal_tool, Jail, TestGuard, Toolset};
use crate::util::estimate_tokens;

/// Longest test output quoted into a prompt; longer output keeps its tail.
const PROMPT_MESSAGE_CHARS: usize = 4000;

const NO_DEBUGGER: &str =
    "No debugger is available for this test. Investigate with the file tools and the test output.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplyResult {
    Applied,
    RevisedThenApplied,
    Unappliable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Running,
    Solved,
    Exhausted,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Running => "running",
            Outcome::Solved => "solved",
            Outcome::Exhausted => "exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebugReport {
    pub test: String,
    pub kind: TestKind,
    pub report: String,
    /// True when the episode hit its turn limit and the report was taken from
    /// the last assistant message.
    pub synthesized: bool,
    pub turns_used: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchAttempt {
    /// 1-based.
    pub index: u32,
    /// Patch text as proposed by Explore Files (empty if none was produced).
    pub proposed_patch: String,
    /// Patch that was evaluated: the revised one when revision succeeded.
    pub patch_text: String,
    pub apply_result: ApplyResult,
    /// Why the patch could not be applied.
    pub apply_error: Option<String>,
    /// Diff of the patched working copy against the initial snapshot.
    pub final_diff: String,
    pub test_state: Option<TestState>,
    pub reports: Vec<DebugReport>,
    /// Tree hash of the working copy Explore Files started from.
    pub start_tree_hash: String,
}

impl PatchAttempt {
    pub fn failing_tests(&self) -> Vec<&str> {
        self.test_state
            .as_ref()
            .map(|s| s.failing().collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowState {
    pub iteration: u32,
    pub attempts: Vec<PatchAttempt>,
    pub outcome: Outcome,
    pub initial_state: TestState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub state: WorkflowState,
    /// Manifest with the initial failing/passing partition filled in.
    pub manifest: TestManifest,
    pub initial_tree_hash: String,
    /// Attempt index of the returned patch.
    pub selected_attempt: Option<u32>,
    pub final_patch: Option<String>,
    pub verdict: HackVerdict,
    pub usage: BTreeMap<String, Usage>,
}

impl RunResult {
    pub fn solved(&self) -> bool {
        self.state.outcome == Outcome::Solved
    }

    /// 0 solved and clean, 2 exhausted, 3 hacked.
    pub fn exit_code(&self) -> i32 {
        if self.verdict.hacked {
            3
        } else if self.solved() {
            0
        } else {
            2
        }
    }

    pub fn total_usage(&self) -> Usage {
        let mut u = Usage::default();
        for v in self.usage.values() {
            u.add(*v);
        }
        u
    }

    /// Run summary: outcome, per-attempt test matrix, token counts, verdict.
    pub fn summary(&self, config: &WorkflowConfig) -> Value {
        let tests: Vec<&str> = self.manifest.tests.iter().map(|t| t.name.as_str()).collect();
        let attempts: Vec<Value> = self
            .state
            .attempts
            .iter()
            .map(|a| {
                let matrix: BTreeMap<&str, &str> = match &a.test_state {
                    Some(s) => tests
                        .iter()
                        .map(|t| (*t, s.outcome(t).map_or("missing", |o| o.status.as_str())))
                        .collect(),
                    None => BTreeMap::new(),
                };
                json!({
                    "index": a.index,
                    "apply_result": a.apply_result,
                    "apply_error": a.apply_error,
                    "diff_empty": a.final_diff.trim().is_empty(),
                    "tests": matrix,
                    "failing": a.failing_tests(),
                    "debug_reports": a.reports.len(),
                    "start_tree_hash": a.start_tree_hash,
                })
            })
            .collect();
        let initial: BTreeMap<&str, &str> = self
            .state
            .initial_state
            .outcomes
            .iter()
            .map(|(n, o)| (n.as_str(), o.status.as_str()))
            .collect();
        let total = self.total_usage();
        json!({
            "outcome": self.state.outcome,
            "iterations": self.state.iteration,
            "exit_code": self.exit_code(),
            "selected_attempt": self.selected_attempt,
            "has_final_patch": self.final_patch.is_some(),
            "initial_tree_hash": self.initial_tree_hash,
            "initial_tests": initial,
            "initially_failing": self.manifest.failing,
            "attempts": attempts,
            "tokens": {
                "by_phase": self.usage,
                "prompt_tokens": total.prompt_tokens,
                "completion_tokens": total.completion_tokens,
                "total": total.total(),
            },
            "hack_verdict": self.verdict,
            "config": config,
        })
    }
}

/// Failing tests to debug: reproduction failures first, then regression
/// failures, each in manifest order, capped at `max_tests_debug`.
pub fn schedule_debug_targets<'m>(
    state: &TestState,
    manifest: &'m TestManifest,
    max_tests_debug: usize,
) -> Vec<&'m TestRef> {
    let failing = |t: &&TestRef| !state.passes(&t.name);
    manifest
        .tests
        .iter()
        .filter(|t| t.kind == TestKind::Reproduction)
        .filter(failing)
        .chain(
            manifest
                .tests
                .iter()
                .filter(|t| t.kind == TestKind::Regression)
                .filter(failing),
        )
        .take(max_tests_debug)
        .collect()
}

/// The attempt to return when no attempt passed everything: among applied
/// attempts with a non-empty diff that keep every initially passing test
/// passing, the one passing the most reproduction tests, earliest on ties.
pub fn select_final_patch<'a>(attempts: &'a [PatchAttempt], manifest: &TestManifest) -> Option<&'a PatchAttempt> {
    let mut best: Option<(&PatchAttempt, usize)> = None;
    for attempt in attempts {
        let Some(state) = &attempt.test_state else { continue };
        if attempt.final_diff.trim().is_empty() {
            continue;
        }
        if !manifest.passing.iter().all(|t| state.passes(t)) {
            continue;
        }
        let repro = manifest.reproduction_tests().filter(|t| state.passes(&t.name)).count();
        if best.is_none_or(|(_, b)| repro > b) {
            best = Some((attempt, repro));
        }
    }
    best.map(|(a, _)| a)
}

fn tail_chars(text: &str, max: usize) -> String {
    let count = text.chars().count();
    if count <= max {
        return text.to_string();
    }
    let kept: String = text.chars().skip(count - max).collect();
    format!("[... earlier output truncated]\n{kept}")
}

fn fenced(text: &str, lang: &str) -> String {
    let body = text.trim_end_matches('\n');
    let fence = if body.contains("```") { "````" } else { "```" };
    format!("{fence}{lang}\n{body}\n{fence}")
}

fn test_block(test: &TestRef, outcome: Option<&TestOutcome>) -> String {
    let mut out = format!(
        "### {} ({} test, {}:{})\n{}\n",
        test.name,
        test.kind,
        test.file.display(),
        test.line,
        fenced(&test.source, "")
    );
    if let Some(o) = outcome {
        out.push_str(&format!(
            "Test output ({}):\n{}\n",
            o.status.as_str(),
            fenced(&tail_chars(&o.message, PROMPT_MESSAGE_CHARS), "")
        ));
    }
    out
}

/// Initially failing tests with their sources and output.
pub fn render_initial_failing(manifest: &TestManifest, initial: &TestState) -> String {
    manifest
        .tests
        .iter()
        .filter(|t| !initial.passes(&t.name))
        .map(|t| test_block(t, initial.outcome(&t.name)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_attempt(attempt: &PatchAttempt, manifest: &TestManifest) -> String {
    let mut out = format!("## Attempt {}\n", attempt.index);
    if attempt.patch_text.trim().is_empty() {
        out.push_str("No patch was produced.\n");
    } else {
        out.push_str(&format!("### Patch\n{}\n", fenced(&attempt.patch_text, "diff")));
    }
    match attempt.apply_result {
        ApplyResult::Applied => out.push_str("### Result\nThe patch applied cleanly.\n"),
        ApplyResult::RevisedThenApplied => {
            out.push_str("### Result\nThe proposed patch did not apply; the revised version above did.\n")
        }
        ApplyResult::Unappliable => out.push_str(&format!(
            "### Result\nThe patch could not be applied, so no tests were run.\n{}\n",
            fenced(attempt.apply_error.as_deref().unwrap_or("unknown error"), "")
        )),
    }
    if let Some(state) = &attempt.test_state {
        let failing: Vec<&TestRef> = manifest.tests.iter().filter(|t| !state.passes(&t.name)).collect();
        if failing.is_empty() {
            out.push_str("All tests passed.\n");
        } else {
            out.push_str(&format!(
                "### Failing tests ({} of {})\n",
                failing.len(),
                manifest.tests.len()
            ));
            for t in failing {
                out.push_str(&test_block(t, state.outcome(&t.name)));
            }
        }
    }
    if !attempt.reports.is_empty() {
        out.push_str("### Debug reports\n");
        for r in &attempt.reports {
            out.push_str(&format!("#### {} ({} test)\n{}\n", r.test, r.kind, r.report.trim_end()));
        }
    }
    out
}

/// The `{all_patches_str}` block: every prior attempt in order. When the
/// block exceeds `token_budget`, the oldest attempts are dropped whole and a
/// marker line says which. The newest attempt is always kept.
pub fn build_iteration_context(attempts: &[PatchAttempt], manifest: &TestManifest, token_budget: u64) -> String {
    const HEADER: &str = "# Previous attempts\nEach patch below was applied to the initial repository state, which is unchanged. Propose a new complete patch against that state.\n";
    let rendered: Vec<String> = attempts.iter().map(|a| render_attempt(a, manifest)).collect();
    let mut used = estimate_tokens(HEADER);
    let mut first_kept = rendered.len();
    for (i, block) in rendered.iter().enumerate().rev() {
        let cost = estimate_tokens(block);
        if first_kept < rendered.len() && used + cost > token_budget {
            break;
        }
        used += cost;
        first_kept = i;
    }
    let mut out = String::from(HEADER);
    if first_kept > 0 {
        let last_elided = attempts[first_kept - 1].index;
        let marker = if first_kept == 1 {
            format!("[attempt {last_elided} elided to fit the context budget]")
        } else {
            format!(
                "[attempts {}-{last_elided} elided to fit the context budget]",
                attempts[0].index
            )
        };
        out.push('\n');
        out.push_str(&marker);
        out.push('\n');
    }
    for block in &rendered[first_kept..] {
        out.push('\n');
        out.push_str(block);
    }
    out
}

/// Last fenced block of `text` that parses as a patch.
pub fn last_fenced_diff(text: &str) -> Option<String> {
    let mut blocks = Vec::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        let trimmed = line.trim_start();
        if trimmed.starts_with("```") {
            match current.take() {
                Some(block) => blocks.push(block),
                None => current = Some(String::new()),
            }
            continue;
        }
        if let Some(block) = current.as_mut() {
            block.push_str(line);
            block.push('\n');
        }
    }
    blocks
        .into_iter()
        .rev()
        .find(|b| parse_patch(b).is_ok_and(|p| !p.files.is_empty()))
}

/// Everything one run needs.
pub struct Workflow<'a> {
    pub issue: &'a IssueSpec,
    pub manifest: &'a TestManifest,
    pub config: &'a WorkflowConfig,
    pub provider: &'a dyn Provider,
    /// Shim command with a `{test_name}` placeholder. Without it Debug One
    /// runs with the file tools only.
    pub debugger_command: Option<&'a str>,
    pub audit: &'a AuditLog,
}

struct Ctx<'a> {
    wf: &'a Workflow<'a>,
    snapshot: Snapshot,
    base_tree: MemTree,
    runner: TestRunner,
    launcher: Option<DebuggerLauncher>,
    manifest: TestManifest,
    guard: TestGuard,
    initial: TestState,
    usage: BTreeMap<String, Usage>,
}

impl Ctx<'_> {
    fn env(&self) -> AgentEnv<'_> {
        AgentEnv {
            provider: self.wf.provider,
            temperature: self.wf.config.temperature,
            provider_attempts: self.wf.config.provider_attempts,
            provider_backoff: Duration::from_millis(self.wf.config.provider_backoff_ms),
        }
    }

    fn max_fuzz(&self) -> usize {
        self.wf.config.max_fuzz as usize
    }

    fn spec(&self, phase: Phase) -> SubAgentSpec<'static> {
        let (system_template, user_template) = match phase {
            Phase::ExploreFiles => (EXPLORE_FILES_SYSTEM, EXPLORE_FILES_USER),
            Phase::RevisePatch => (REVISE_PATCH_SYSTEM, REVISE_PATCH_USER),
            Phase::DebugOne => (DEBUG_ONE_SYSTEM, DEBUG_ONE_USER),
            Phase::GenerateTests => unreachable!("not part of the loop"),
        };
        SubAgentSpec {
            phase,
            system_template,
            user_template,
            max_turns: self.wf.config.max_turns(phase),
            terminal_tool: terminal_tool(phase),
        }
    }

    fn account(&mut self, t: &AgentTranscript) -> Result<()> {
        self.usage
            .entry(t.tag.phase.as_str().to_string())
            .or_default()
            .add(t.usage);
        check_provider(t)
    }

    fn emit(&self, phase: &str, attempt: u32, kind: RecordKind, data: Value) {
        self.wf.audit.emit(AuditEvent::new(phase, attempt, kind, data));
    }

    fn log_tests(&self, phase: &str, attempt: u32, label: &str, state: &TestState) {
        let events = state.outcomes.iter().map(|(name, o)| {
            AuditEvent::new(
                phase,
                attempt,
                RecordKind::TestRun,
                json!({"run": label, "test": name, "status": o.status, "message": o.message}),
            )
        });
        self.wf.audit.commit(events);
    }

    fn run_tests(&self, copy: &WorkingCopy) -> TestState {
        self.runner
            .run_all(copy.root(), self.manifest.tests.iter().map(|t| t.name.as_str()))
    }

    fn explore(&mut self, index: u32, attempts: &[PatchAttempt]) -> Result<(String, String)> {
        let copy = self.snapshot.checkout(None, 0)?;
        let hash = copy.tree_hash()?;
        self.emit(
            Phase::ExploreFiles.as_str(),
            index,
            RecordKind::PhaseTransition,
            json!({"event": "iteration_start", "tree_hash": hash}),
        );
        if hash != self.snapshot.tree_hash() {
            return Err(Error::Sandbox(format!(
                "working copy for iteration {index} does not match the initial snapshot"
            )));
        }
        let mut spec = self.spec(Phase::ExploreFiles);
        let binds = if attempts.is_empty() {
            spec.user_template = EXPLORE_FILES_USER_INITIAL;
            let jail = Jail::new(copy.root()).map_err(|e| Error::Sandbox(e.to_string()))?;
            let tree =
                folder_hierarchy(&jail, self.wf.config.repo_structure_depth as usize, None).map_err(Error::Sandbox)?;
            bindings([
                ("issue", self.wf.issue.description.clone()),
                (
                    "initial_failing_tests",
                    render_initial_failing(&self.manifest, &self.initial),
                ),
                ("repo_structure", tree),
            ])
        } else {
            bindings([
                ("issue", self.wf.issue.description.clone()),
                (
                    "all_patches_str",
                    build_iteration_context(attempts, &self.manifest, self.wf.config.context_token_budget),
                ),
            ])
        };
        let mut tools = Toolset::explore(copy.root(), self.wf.config, &self.guard)?;
        let tag = EpisodeTag::new(Phase::ExploreFiles, index, 0);
        let t = run_subagent(&self.env(), &spec, &binds, &mut tools, tag, self.wf.audit)?;
        self.account(&t)?;
        let patch = match t.stop_reason {
            StopReason::Terminal => payload_str(&t, "patch"),
            _ => t.last_assistant_text().and_then(last_fenced_diff).unwrap_or_default(),
        };
        Ok((patch, hash))
    }

    fn revise(&mut self, index: u32, patch_text: &str, error: &str) -> Result<Option<String>> {
        let copy = self.snapshot.checkout(None, 0)?;
        let binds = bindings([("patch", patch_text.to_string()), ("error_message", error.to_string())]);
        let mut tools = Toolset::revise(copy.root(), self.wf.config, &self.guard, &self.base_tree)?;
        let tag = EpisodeTag::new(Phase::RevisePatch, index, 0);
        let t = run_subagent(
            &self.env(),
            &self.spec(Phase::RevisePatch),
            &binds,
            &mut tools,
            tag,
            self.wf.audit,
        )?;
        self.account(&t)?;
        Ok((t.stop_reason == StopReason::Terminal).then(|| payload_str(&t, "patch")))
    }

    /// Parses and applies `text` to a fresh copy.
    fn try_apply(&self, text: &str) -> std::result::Result<(Patch, WorkingCopy), String> {
        if text.trim().is_empty() {
            return Err("No patch was produced.".into());
        }
        let patch = parse_patch(text).map_err(|e| e.to_string())?;
        if let Some(refusal) = self.guard.refusal(&patch) {
            return Err(refusal);
        }
        match self.snapshot.checkout(Some(&patch), self.max_fuzz()) {
            Ok(copy) => Ok((patch, copy)),
            Err(Error::PatchApply(report)) => Err(report),
            Err(e) => Err(e.to_string()),
        }
    }

    fn iteration(&mut self, index: u32, attempts: &[PatchAttempt]) -> Result<PatchAttempt> {
        let (proposed, start_tree_hash) = self.explore(index, attempts)?;
        let mut attempt = PatchAttempt {
            index,
            proposed_patch: proposed.clone(),
            patch_text: proposed.clone(),
            apply_result: ApplyResult::Unappliable,
            apply_error: None,
            final_diff: String::new(),
            test_state: None,
            reports: Vec::new(),
            start_tree_hash,
        };

        let applied = match self.try_apply(&proposed) {
            Ok(ok) => Some((ApplyResult::Applied, ok)),
            Err(error) if proposed.trim().is_empty() => {
                attempt.apply_error = Some(error);
                None
            }
            Err(error) => {
                self.emit(
                    Phase::RevisePatch.as_str(),
                    index,
                    RecordKind::PhaseTransition,
                    json!({"event": "apply_failed", "error": error}),
                );
                match self.revise(index, &proposed, &error)? {
                    Some(revised) => match self.try_apply(&revised) {
                        Ok(ok) => {
                            attempt.patch_text = revised;
                            Some((ApplyResult::RevisedThenApplied, ok))
                        }
                        Err(e) => {
                            attempt.patch_text = revised;
                            attempt.apply_error = Some(e);
                            None
                        }
                    },
                    None => {
                        attempt.apply_error = Some(error);
                        None
                    }
                }
            }
        };

        let Some((result, (patch, copy))) = applied else {
            self.emit(
                "workflow",
                index,
                RecordKind::PhaseTransition,
                json!({"event": "attempt_unappliable", "error": attempt.apply_error}),
            );
            return Ok(attempt);
        };
        attempt.apply_result = result;
        // Taken before the tests run, so runner by-products stay out of it.
        attempt.final_diff = self.snapshot.diff_against(&copy)?;
        let state = self.run_tests(&copy);
        drop(copy);
        self.log_tests("workflow", index, "attempt", &state);

        let targets: Vec<TestRef> =
            schedule_debug_targets(&state, &self.manifest, self.wf.config.max_tests_debug as usize)
                .into_iter()
                .cloned()
                .collect();
        if !targets.is_empty() {
            attempt.reports = self.debug_all(index, &attempt.patch_text, &patch, &state, &targets)?;
        }
        attempt.test_state = Some(state);
        Ok(attempt)
    }

    fn debug_all(
        &mut self,
        index: u32,
        patch_text: &str,
        patch: &Patch,
        state: &TestState,
        targets: &[TestRef],
    ) -> Result<Vec<DebugReport>> {
        let width = self.wf.config.debug_parallelism.max(1) as usize;
        let mut results = Vec::with_capacity(targets.len());
        {
            let this = &*self;
            for (chunk_no, chunk) in targets.chunks(width).enumerate() {
                let chunk_results: Vec<Result<(DebugReport, Vec<AuditEvent>, AgentTranscript)>> =
                    std::thread::scope(|scope| {
                        let handles: Vec<_> = chunk
                            .iter()
                            .enumerate()
                            .map(|(i, test)| {
                                let slot = (chunk_no * width + i) as u32;
                                scope.spawn(move || this.debug_one(index, slot, patch_text, patch, state, test))
                            })
                            .collect();
                        handles
                            .into_iter()
                            .map(|h| {
                                h.join()
                                    .unwrap_or_else(|_| Err(Error::Sandbox("debug episode panicked".into())))
                            })
                            .collect()
                    });
                results.extend(chunk_results);
            }
        }
        // Joined in schedule order so the log does not depend on thread timing.
        let mut reports = Vec::new();
        let mut first_error = None;
        for r in results {
            match r {
                Ok((report, events, transcript)) => {
                    self.wf.audit.commit(events);
                    if let Err(e) = self.account(&transcript) {
                        first_error.get_or_insert(e);
                    }
                    reports.push(report);
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        match first_error {
            Some(e) => Err(e),
            None => Ok(reports),
        }
    }

    fn debug_one(
        &self,
        index: u32,
        slot: u32,
        patch_text: &str,
        patch: &Patch,
        state: &TestState,
        test: &TestRef,
    ) -> Result<(DebugReport, Vec<AuditEvent>, AgentTranscript)> {
        let copy = self.snapshot.checkout(Some(patch), self.max_fuzz())?;
        let mut session = self.launcher.as_ref().map(|l| l.launch(copy.root(), &test.name));
        let context = match &session {
            None => NO_DEBUGGER.to_string(),
            Some(s) if s.is_dead() => format!(
                "The debugger could not be started for this test.\n{}",
                s.initial_context()
            ),
            Some(s) => s.initial_context().to_string(),
        };
        if session.as_ref().is_some_and(|s| s.is_dead()) {
            session = None;
        }
        let message = state.outcome(&test.name).map(|o| o.message.as_str()).unwrap_or("");
        let binds = bindings([
            ("issue", self.wf.issue.description.clone()),
            ("test_source", test.source.clone()),
            ("reg_or_repro", test.kind.as_str().to_string()),
            ("test_message", tail_chars(message, PROMPT_MESSAGE_CHARS)),
            ("failing_patch", patch_text.to_string()),
            ("context", context),
        ]);
        let buffer = EventBuffer::new();
        let transcript = {
            let mut tools = Toolset::debug(copy.root(), self.wf.config, &self.guard, session.as_mut())?;
            let tag = EpisodeTag::new(Phase::DebugOne, index, slot);
            run_subagent(
                &self.env(),
                &self.spec(Phase::DebugOne),
                &binds,
                &mut tools,
                tag,
                &buffer,
            )?
        };
        if let Some(s) = session.as_mut() {
            s.close();
        }
        let (report, synthesized) = match transcript.stop_reason {
            StopReason::Terminal => (payload_str(&transcript, "report"), false),
            _ => (
                transcript
                    .last_assistant_text()
                    .map(str::to_string)
                    .unwrap_or_else(|| "The debugging session ended without findings.".into()),
                true,
            ),
        };
        let report = DebugReport {
            test: test.name.clone(),
            kind: test.kind,
            report,
            synthesized,
            turns_used: transcript.turns_used,
        };
        Ok((report, buffer.into_events(), transcript))
    }
}

fn payload_str(t: &AgentTranscript, key: &str) -> String {
    t.output
        .as_ref()
        .and_then(|v| v.get(key))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string()
}

fn check_provider(t: &AgentTranscript) -> Result<()> {
    if t.stop_reason == StopReason::ProviderError {
        return Err(Error::Provider(
            t.provider_error.clone().unwrap_or_else(|| "provider failed".into()),
        ));
    }
    Ok(())
}

impl<'a> Workflow<'a> {
    pub fn run(&'a self) -> Result<RunResult> {
        self.issue.validate()?;
        self.config.validate()?;
        let snapshot = Snapshot::capture(&self.issue.repo_root)?;
        let runner = TestRunner::new(&self.issue.test_command_template, self.config)?;
        let launcher = self
            .debugger_command
            .map(|cmd| DebuggerLauncher::new(cmd, runner.env().to_vec(), self.config))
            .transpose()?;

        let pristine = snapshot.checkout(None, 0)?;
        let initial = runner.run_stable(pristine.root(), self.manifest, 2)?;
        drop(pristine);
        let manifest = self
            .manifest
            .clone()
            .with_initial_state(&initial)
            .map_err(|e| match e {
                Error::InvalidManifest(m) => Error::InvalidInstance(m),
                other => other,
            })?;
        let guard = TestGuard::new(&manifest, self.config)?;
        let base_tree = snapshot.read_tree()?;
        let initial_tree_hash = snapshot.tree_hash().to_string();

        let mut ctx = Ctx {
            wf: self,
            snapshot,
            base_tree,
            runner,
            launcher,
            manifest,
            guard,
            initial,
            usage: BTreeMap::new(),
        };
        ctx.emit(
            "workflow",
            0,
            RecordKind::PhaseTransition,
            json!({"event": "start", "tree_hash": initial_tree_hash, "tests": ctx.manifest.tests.len()}),
        );
        ctx.log_tests("workflow", 0, "initial", &ctx.initial);

        let mut state = WorkflowState {
            iteration: 0,
            attempts: Vec::new(),
            outcome: Outcome::Running,
            initial_state: ctx.initial.clone(),
        };
        if ctx.manifest.failing.is_empty() {
            state.outcome = Outcome::Solved;
        }
        while state.outcome == Outcome::Running && state.iteration < self.config.num_total_iterations {
            state.iteration += 1;
            let attempt = ctx.iteration(state.iteration, &state.attempts)?;
            let solved = attempt
                .test_state
                .as_ref()
                .is_some_and(|s| s.failing().next().is_none());
            state.attempts.push(attempt);
            if solved {
                state.outcome = Outcome::Solved;
            }
        }
        if state.outcome == Outcome::Running {
            state.outcome = Outcome::Exhausted;
        }

        let chosen = match state.outcome {
            Outcome::Solved => state.attempts.last(),
            _ => select_final_patch(&state.attempts, &ctx.manifest),
        };
        let selected_attempt = chosen.map(|a| a.index);
        let final_patch = chosen.map(|a| a.final_diff.clone()).filter(|d| !d.trim().is_empty());
        let flags = match &final_patch {
            Some(diff) => {
                let patch = parse_patch(diff)?;
                let screen = ScreenContext::new(&ctx.guard, &ctx.manifest, &self.issue.test_command_template);
                screen_patch(&patch, &screen)
            }
            None => Vec::new(),
        };
        let verdict = verdict(flags, &default_profiles(), self.config.hack_vote_threshold);
        ctx.emit(
            "workflow",
            state.iteration,
            RecordKind::PhaseTransition,
            json!({
                "event": "finish",
                "outcome": state.outcome,
                "selected_attempt": selected_attempt,
                "hacked": verdict.hacked,
                "screener_votes": verdict.screener_votes,
            }),
        );
        Ok(RunResult {
            state,
            manifest: ctx.manifest,
            initial_tree_hash,
            selected_attempt,
            final_patch,
            verdict,
            usage: ctx.usage,
        })
    }
}
