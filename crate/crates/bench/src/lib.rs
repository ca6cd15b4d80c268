//! Synthetic inputs for the benchmarks.

use std::path::{Path, PathBuf};

use testfix_core::patch::MemTree;
use testfix_core::sandbox::{TestOutcome, TestState, TestStatus};
use testfix_core::workflow::{ApplyResult, PatchAttempt};
use testfix_core::{TestKind, TestManifest, TestOrigin, TestRef};

/// A `lines`-line source file with distinct lines.
pub fn source_file(lines: usize) -> String {
    (0..lines)
        .map(|i| format!("    value_{i} = compute({i}, {})\n", i * 7 % 13))
        .collect()
}

/// A patch with `hunks` evenly spaced one-line replacements against
/// [`source_file`], every header off by `shift` lines.
pub fn spaced_patch(lines: usize, hunks: usize, shift: i64) -> String {
    let mut out = String::from("--- a/src/big.py\n+++ b/src/big.py\n");
    let step = lines / (hunks + 1);
    for h in 1..=hunks {
        let at = h * step;
        let start = at as i64 - 2 + shift;
        out.push_str(&format!("@@ -{start},5 +{start},5 @@\n"));
        for i in at - 3..at + 2 {
            let line = format!("    value_{i} = compute({i}, {})", i * 7 % 13);
            if i == at {
                out.push_str(&format!("-{line}\n+    value_{i} = compute({i}, 0)\n"));
            } else {
                out.push_str(&format!(" {line}\n"));
            }
        }
    }
    out
}

pub fn tree_with(path: &str, text: &str) -> MemTree {
    let mut tree = MemTree::new();
    tree.insert(PathBuf::from(path), text.as_bytes().to_vec());
    tree
}

/// Writes `files` Python modules of `lines` lines each under `root/pkg`.
pub fn write_repo(root: &Path, files: usize, lines: usize) {
    let pkg = root.join("pkg");
    std::fs::create_dir_all(&pkg).unwrap();
    for f in 0..files {
        let mut text = source_file(lines);
        if f % 10 == 0 {
            text.push_str("def needle_function():\n    return 1\n");
        }
        std::fs::write(pkg.join(format!("mod_{f}.py")), text).unwrap();
    }
}

/// `attempts` applied attempts over `tests` tests; pass flags come from a
/// fixed pseudo-random pattern.
pub fn selection_input(attempts: usize, tests: usize) -> (Vec<PatchAttempt>, TestManifest) {
    let name = |t: usize| format!("tests/test_x.py::t{t}");
    let refs = (0..tests)
        .map(|t| TestRef {
            name: name(t),
            file: "tests/test_x.py".into(),
            line: t + 1,
            source: "def t(): pass".into(),
            kind: if t % 2 == 0 {
                TestKind::Reproduction
            } else {
                TestKind::Regression
            },
            origin: TestOrigin::Human,
        })
        .collect();
    let mut manifest = TestManifest::new(refs).unwrap();
    manifest.failing = (0..tests).step_by(2).map(name).collect();
    manifest.passing = (1..tests).step_by(2).map(name).collect();
    let list = (0..attempts)
        .map(|a| {
            let mut state = TestState::default();
            for t in 0..tests {
                let pass = (a * 31 + t * 17) % 5 != 0;
                let status = if pass { TestStatus::Passed } else { TestStatus::Failed };
                state.insert(name(t), TestOutcome::new(status, "", 0.0));
            }
            PatchAttempt {
                index: a as u32 + 1,
                proposed_patch: String::new(),
                patch_text: String::new(),
                apply_result: ApplyResult::Applied,
                apply_error: None,
                final_diff: format!("diff {a}\n"),
                test_state: Some(state),
                reports: Vec::new(),
                start_tree_hash: String::new(),
            }
        })
        .collect();
    (list, manifest)
}
