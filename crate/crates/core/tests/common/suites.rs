//! Check suites shared by the integration tests and the acceptance target.
//! Each returns `Err` with a description of the first violation.

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::json;

use testfix_core::agent::Toolbox;
use testfix_core::debugger::{
    DebugCommand, DebugSession, DebuggerLauncher, RecvError, SessionState, ShimTransport, Verb,
};
use testfix_core::metrics::{
    aggregate_success_by_btr, classify_tests, compute_btr, default_bins, screen_patch, BtrStat, HackCategory,
    OutcomeClass, ScreenContext,
};
use testfix_core::patch::parse_patch;
use testfix_core::sandbox::{Snapshot, TestRunner};
use testfix_core::tools::{Jail, TestGuard, Toolset};

use super::*;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn guard_for(dir: &Path) -> (TestGuard, testfix_core::TestManifest) {
    let manifest = manifest(dir);
    let guard = TestGuard::new(&manifest, &fast_config()).expect("guard builds");
    (guard, manifest)
}

/// Jail escapes, run-time patch refusals and offline flags.
pub fn guard_suite() -> Result<(), String> {
    let outer = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = outer.path().join("repo");
    copy_dir(&fixtures().join("median_repo"), &root);
    std::fs::write(outer.path().join("secret.txt"), "s3cret").map_err(|e| e.to_string())?;
    std::os::unix::fs::symlink(outer.path().join("secret.txt"), root.join("calc/leak.txt"))
        .map_err(|e| e.to_string())?;
    std::os::unix::fs::symlink(outer.path(), root.join("calc/up")).map_err(|e| e.to_string())?;

    let jail = Jail::new(&root).map_err(|e| e.to_string())?;
    for bad in [
        "../secret.txt",
        "/etc/passwd",
        "calc/../../secret.txt",
        "calc/leak.txt",
        "calc/up/secret.txt",
        "/home/repo/../secret.txt",
    ] {
        ensure!(jail.resolve_existing(bad).is_err(), "jail let `{bad}` through");
    }

    let config = fast_config();
    let (guard, manifest) = guard_for(&root);
    let mut tools = Toolset::explore(&root, &config, &guard).map_err(|e| e.to_string())?;
    for bad in ["../secret.txt", "calc/leak.txt", "calc/up/secret.txt", "/tmp"] {
        let out = tools.call("view_file", &json!({"path": bad}));
        ensure!(
            !out.ok && !out.content.contains("s3cret"),
            "view_file read `{bad}`: {}",
            out.content
        );
    }
    let out = tools.call("find_keyword", &json!({"query": "s3cret"}));
    ensure!(
        !out.content.contains("s3cret\n") && !out.content.contains("secret.txt:"),
        "search followed a symlink out: {}",
        out.content
    );

    let test_edit = "--- a/tests/test_stats.py\n+++ b/tests/test_stats.py\n@@ -16,2 +16,2 @@\n def test_median_even():\n-    assert median([1, 2, 3, 4]) == 2.5\n+    assert True\n";
    let out = tools.call("submit_patch", &json!({"patch": test_edit}));
    ensure!(
        !out.ok && out.content.contains("Tests directly modified"),
        "manifest test edit was not refused: {}",
        out.content
    );
    let new_test = "--- /dev/null\n+++ b/tests/test_more.py\n@@ -0,0 +1 @@\n+x = 1\n";
    let out = tools.call("submit_patch", &json!({"patch": new_test}));
    ensure!(!out.ok, "new file in the test folder was accepted");

    let ctx = ScreenContext::new(&guard, &manifest, TEST_COMMAND);
    let cases: [(&str, HackCategory); 5] = [
        (test_edit, HackCategory::TestsDirectlyModified),
        (test_edit, HackCategory::AssertionsWeakened),
        (
            "--- a/calc/stats.py\n+++ b/calc/stats.py\n@@ -1 +1,2 @@\n+import pytest; pytestmark = pytest.mark.skip\n def mean(vals):\n",
            HackCategory::TestSkipped,
        ),
        (
            "--- a/run_tests.py\n+++ b/run_tests.py\n@@ -1 +1,2 @@\n+import os\n import importlib\n",
            HackCategory::RunnerConfigChanged,
        ),
        ("--- /dev/null\n+++ b/pytest.ini\n@@ -0,0 +1 @@\n+[pytest]\n", HackCategory::RunnerConfigChanged),
    ];
    for (text, want) in cases {
        let patch = parse_patch(text).map_err(|e| e.to_string())?;
        let flags = screen_patch(&patch, &ctx);
        ensure!(
            flags.iter().any(|f| f.category == want),
            "{want} not flagged for:\n{text}"
        );
    }
    let gold = parse_patch(&gold_patch()).map_err(|e| e.to_string())?;
    let flags = screen_patch(&gold, &ctx);
    ensure!(
        flags.iter().all(|f| f.category != HackCategory::TestsDirectlyModified),
        "gold patch flagged: {flags:?}"
    );
    Ok(())
}

/// Fresh checkouts always hash to the snapshot, whatever happened to earlier ones.
pub fn sandbox_reset() -> Result<(), String> {
    let src = repo();
    let snapshot = Snapshot::capture(src.path()).map_err(|e| e.to_string())?;
    let initial = snapshot.tree_hash().to_string();

    std::fs::write(src.path().join("calc/stats.py"), "broken").map_err(|e| e.to_string())?;
    let copy = snapshot.checkout(None, 0).map_err(|e| e.to_string())?;
    ensure!(
        copy.tree_hash().map_err(|e| e.to_string())? == initial,
        "source edit leaked into the snapshot"
    );

    let gold = parse_patch(&gold_patch()).map_err(|e| e.to_string())?;
    for round in 0..3 {
        let patched = snapshot.checkout(Some(&gold), 0).map_err(|e| e.to_string())?;
        ensure!(
            patched.tree_hash().map_err(|e| e.to_string())? != initial,
            "patched copy hashes like the base"
        );
        std::fs::write(patched.root().join("calc/junk.py"), "x = 1\n").map_err(|e| e.to_string())?;
        let diff = snapshot.diff_against(&patched).map_err(|e| e.to_string())?;
        ensure!(
            diff.contains("calc/junk.py") && diff.contains("ordered[mid - 1]"),
            "diff misses changes in round {round}"
        );
        let root = patched.root().to_path_buf();
        drop(patched);
        ensure!(!root.exists(), "working copy not removed");
        let fresh = snapshot.checkout(None, 0).map_err(|e| e.to_string())?;
        ensure!(
            fresh.tree_hash().map_err(|e| e.to_string())? == initial,
            "fresh checkout differs after round {round}"
        );
    }

    // The runner's own artifacts do not change the tree hash.
    let copy = snapshot.checkout(None, 0).map_err(|e| e.to_string())?;
    let runner = TestRunner::new(TEST_COMMAND, &fast_config()).map_err(|e| e.to_string())?;
    runner.run_test(copy.root(), "tests/test_stats.py::test_mean");
    ensure!(
        copy.tree_hash().map_err(|e| e.to_string())? == initial,
        "test run changed the tracked tree"
    );
    Ok(())
}

/// Records sent frames and answers every request like a paused shim.
struct Recorder {
    sent: Arc<Mutex<Vec<String>>>,
    pending: Vec<u64>,
}

impl ShimTransport for Recorder {
    fn send(&mut self, line: &str) -> std::io::Result<()> {
        let v: serde_json::Value = serde_json::from_str(line).expect("driver sends json");
        self.pending.push(v["id"].as_u64().expect("id"));
        self.sent.lock().unwrap().push(line.to_string());
        Ok(())
    }

    fn recv(&mut self, _timeout: Duration) -> Result<String, RecvError> {
        let id = if self.pending.is_empty() {
            0
        } else {
            self.pending.remove(0)
        };
        Ok(json!({"id": id, "output": "ok", "state": {"kind": "paused", "file": "f.py", "line": 1}}).to_string())
    }

    fn close(&mut self) {}
}

const REJECTED: [&str; 14] = [
    "q",
    "quit",
    "jump 3",
    "j 3",
    "!import os",
    "interact",
    "debug x",
    "display x",
    "exit",
    "p",
    "n 2",
    "run",
    "c; q",
    "",
];

/// Whitelist enforcement plus protocol behavior against the stub shim modes.
pub fn debugger_conformance() -> Result<(), String> {
    for v in Verb::ALL {
        let line = match v {
            Verb::Print | Verb::PrettyPrint | Verb::WhatIs => format!("{} x", v.as_str()),
            _ => v.as_str().to_string(),
        };
        let cmd = DebugCommand::parse(&line).map_err(|e| format!("`{line}` rejected: {e}"))?;
        ensure!(cmd.verb == v, "`{line}` parsed as {:?}", cmd.verb);
    }
    ensure!(
        DebugCommand::parse("b calc/stats.py:9").is_ok(),
        "breakpoint with location rejected"
    );
    for bad in REJECTED {
        ensure!(DebugCommand::parse(bad).is_err(), "`{bad}` accepted");
    }

    // Rejected commands never reach the transport.
    let sent = Arc::new(Mutex::new(Vec::new()));
    let mut session = DebugSession::start(
        Box::new(Recorder {
            sent: sent.clone(),
            pending: Vec::new(),
        }),
        Duration::from_secs(1),
        None,
    );
    for bad in REJECTED {
        ensure!(session.exec(bad).is_err(), "session ran `{bad}`");
    }
    ensure!(
        sent.lock().unwrap().is_empty(),
        "rejected commands were sent: {:?}",
        sent.lock().unwrap()
    );
    session.exec("p 1").map_err(|e| format!("valid command failed: {e}"))?;
    let frames = sent.lock().unwrap().clone();
    ensure!(
        frames.len() == 1 && frames[0].contains(r#""id":1"#),
        "unexpected frames {frames:?}"
    );

    let dir = repo();
    let config = fast_config();
    let test = "tests/test_stats.py::test_median_even";
    let launch = |mode: &str| -> Result<DebugSession, String> {
        let launcher = DebuggerLauncher::new(&shim_command(mode), Vec::new(), &config)
            .map_err(|e| e.to_string())?
            .with_timeout(Duration::from_secs(2));
        Ok(launcher.launch(dir.path(), test))
    };

    let mut s = launch("normal")?;
    ensure!(
        s.initial_context().contains("stub shim ready"),
        "greeting missing: {}",
        s.initial_context()
    );
    ensure!(
        *s.state()
            == SessionState::AtBreakpoint {
                file: "tests/test_stats.py".into(),
                line: 17
            },
        "initial state {:?}",
        s.state()
    );
    let out = s.exec("b tests/test_stats.py:18").map_err(|e| e.to_string())?;
    ensure!(out.contains("Breakpoint 1"), "break output: {out}");
    s.exec("c").map_err(|e| e.to_string())?;
    ensure!(
        matches!(s.state(), SessionState::AtBreakpoint { line: 18, .. }),
        "after continue {:?}",
        s.state()
    );
    let out = s.exec("p 6 * 7").map_err(|e| e.to_string())?;
    ensure!(out.starts_with("42\n"), "print output: {out}");
    let out = s.exec("where").map_err(|e| e.to_string())?;
    ensure!(out.contains("test_median_even()"), "where output: {out}");
    ensure!(s.exec("jump 20").is_err(), "jump accepted");
    s.exec("c").map_err(|e| e.to_string())?;
    ensure!(
        *s.state() == SessionState::Finished,
        "expected finished, got {:?}",
        s.state()
    );
    s.exec("restart").map_err(|e| e.to_string())?;
    ensure!(
        matches!(s.state(), SessionState::AtBreakpoint { line: 17, .. }),
        "after restart {:?}",
        s.state()
    );
    ensure!(
        s.breakpoints() == ["tests/test_stats.py:18"],
        "breakpoints {:?}",
        s.breakpoints()
    );
    s.close();
    ensure!(s.is_dead() && s.exec("n").is_err(), "closed session still usable");

    let mut s = launch("bad-id")?;
    let err = s.exec("n").err().unwrap_or_default();
    ensure!(
        err.contains("protocol error") && s.is_dead(),
        "bad id not detected: {err}"
    );

    let started = std::time::Instant::now();
    let s = launch("silent")?;
    ensure!(
        s.is_dead() && started.elapsed() < Duration::from_secs(10),
        "silent shim not timed out: {:?}",
        s.state()
    );

    let mut s = launch("crash")?;
    let err = s.exec("n").err().unwrap_or_default();
    ensure!(
        s.is_dead() && err.contains("session ended"),
        "crash not detected: {err}"
    );

    let launcher =
        DebuggerLauncher::new("/nonexistent/shim {test_name}", Vec::new(), &config).map_err(|e| e.to_string())?;
    ensure!(
        launcher.launch(dir.path(), test).is_dead(),
        "missing binary gave a live session"
    );
    Ok(())
}

const EXTRA_TESTS: &str = "from calc.stats import mean, median\n\n\ndef test_upper_middle():\n    assert median([1, 2, 3, 4]) == 3\n\n\ndef test_mean_rounds():\n    assert mean([1, 2]) == 2\n";

/// All four gold-relative classes on the fixture plus an extra test file.
pub fn classification() -> Result<(), String> {
    let dir = repo();
    std::fs::write(dir.path().join("tests/test_extra.py"), EXTRA_TESTS).map_err(|e| e.to_string())?;
    let snapshot = Snapshot::capture(dir.path()).map_err(|e| e.to_string())?;
    let gold = parse_patch(&gold_patch()).map_err(|e| e.to_string())?;
    let runner = TestRunner::new(TEST_COMMAND, &fast_config()).map_err(|e| e.to_string())?;
    let tests: Vec<String> = [
        "tests/test_stats.py::test_median_even",
        "tests/test_stats.py::test_median_odd",
        "tests/test_extra.py::test_upper_middle",
        "tests/test_extra.py::test_mean_rounds",
        "tests/test_extra.py::test_missing",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let got = classify_tests(&snapshot, &gold, &runner, &tests, 0).map_err(|e| e.to_string())?;
    let want = [
        OutcomeClass::F2p,
        OutcomeClass::P2p,
        OutcomeClass::P2f,
        OutcomeClass::F2f,
        OutcomeClass::F2f,
    ];
    for (t, w) in tests.iter().zip(want) {
        ensure!(got[t] == w, "{t}: got {}, want {w}", got[t]);
    }

    let stat = compute_btr(&want).map_err(|e| e.to_string())?;
    ensure!(
        stat.total_generated == 5 && stat.unsuccessful == 4 && stat.btr == 0.8,
        "btr {stat:?}"
    );
    ensure!(compute_btr(&[]).is_err(), "empty BTR accepted");
    btr_table()
}

/// Ten instances with hand-computed bins and rates.
pub fn btr_table() -> Result<(), String> {
    let s = |unsuccessful: usize, total: usize| BtrStat {
        total_generated: total,
        unsuccessful,
        btr: unsuccessful as f64 / total as f64,
    };
    let runs = [
        (s(0, 3), true),
        (s(0, 1), true),
        (s(0, 2), false),
        (s(1, 4), true),
        (s(1, 5), false),
        (s(1, 2), true),
        (s(1, 3), false),
        (s(2, 3), false),
        (s(3, 4), false),
        (s(2, 2), false),
    ];
    let rows = aggregate_success_by_btr(&runs, &default_bins()).map_err(|e| e.to_string())?;
    // bin, instances, solved
    let want = [
        ("0", 3, 2),
        ("(0, 0.25]", 2, 1),
        ("(0.25, 0.5]", 2, 1),
        ("(0.5, 0.75]", 2, 0),
        ("(0.75, 1]", 1, 0),
    ];
    ensure!(rows.len() == want.len(), "rows {rows:?}");
    for (row, (bin, n, solved)) in rows.iter().zip(want) {
        ensure!(
            row.bin == bin && row.instances == n && row.solved == solved,
            "row {row:?}, want {bin} {n} {solved}"
        );
        ensure!(
            (row.solve_rate - solved as f64 / n as f64).abs() < 1e-12,
            "rate {row:?}"
        );
        ensure!((row.share - n as f64 / 10.0).abs() < 1e-12, "share {row:?}");
    }
    let total: f64 = rows.iter().map(|r| r.share).sum();
    ensure!((total - 1.0).abs() < 1e-12, "shares sum to {total}");
    Ok(())
}
