//! Independent reference implementations used by property tests and the
//! acceptance target.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use testfix_core::patch::{apply, apply_to_text, parse_patch, MemTree};
use testfix_core::sandbox::{TestOutcome, TestState, TestStatus};
use testfix_core::workflow::{select_final_patch, ApplyResult, PatchAttempt};
use testfix_core::{TestKind, TestManifest, TestOrigin, TestRef};

const WORDS: [&str; 8] = ["alpha", "beta", "gamma", "delta", "x = 1", "return y", "", "    pass"];

/// One region replaced by a hunk, in original 0-based coordinates.
#[derive(Debug, Clone)]
struct Region {
    start: usize,
    before: usize,
    removed: usize,
    after: usize,
    added: Vec<String>,
}

impl Region {
    fn old_len(&self) -> usize {
        self.before + self.removed + self.after
    }
}

#[derive(Debug, Clone)]
pub struct SpliceCase {
    pub original: String,
    pub lines: Vec<String>,
    regions: Vec<Region>,
}

impl SpliceCase {
    /// `unique` makes every line distinct, so any placement is unambiguous.
    pub fn random(rng: &mut ChaCha8Rng, unique: bool) -> Self {
        let n = rng.gen_range(12..60);
        let lines: Vec<String> = (0..n)
            .map(|i| {
                let w = *WORDS.choose(rng).unwrap();
                if unique {
                    format!("{w} #{i}")
                } else {
                    w.to_string()
                }
            })
            .collect();
        let mut regions = Vec::new();
        // Leave room on both sides so shifted headers stay inside the file.
        let mut cursor = 6;
        let hunks = rng.gen_range(1..=4);
        for h in 0..hunks {
            let before = rng.gen_range(0..=3);
            let removed = rng.gen_range(0..=3);
            let after = rng.gen_range(0..=3);
            let mut added: Vec<String> = (0..rng.gen_range(0..=3))
                .map(|j| format!("added {h}.{j} {}", rng.gen_range(0..1000)))
                .collect();
            if removed == 0 && added.is_empty() {
                added.push(format!("added {h} only"));
            }
            let old_len = before + removed + after;
            if old_len == 0 {
                continue;
            }
            let gap = rng.gen_range(0..8);
            let start = cursor + gap;
            if start + old_len + 6 > n {
                break;
            }
            regions.push(Region {
                start,
                before,
                removed,
                after,
                added,
            });
            cursor = start + old_len;
        }
        if regions.is_empty() {
            regions.push(Region {
                start: 6,
                before: 1,
                removed: 1,
                after: 0,
                added: vec!["replacement".into()],
            });
        }
        let original = format!("{}\n", lines.join("\n"));
        SpliceCase {
            original,
            lines,
            regions,
        }
    }

    /// Unified diff for the case, with every header moved by `shift` lines.
    pub fn patch_text(&self, shift: i64) -> String {
        let mut out = String::from("--- a/f.txt\n+++ b/f.txt\n");
        let mut delta: i64 = 0;
        for r in &self.regions {
            let new_len = r.before + r.after + r.added.len();
            let old_start = r.start as i64 + 1 + shift;
            let new_start = r.start as i64 + 1 + delta + shift;
            out.push_str(&format!("@@ -{old_start},{} +{new_start},{new_len} @@\n", r.old_len()));
            let l = &self.lines;
            for line in &l[r.start..r.start + r.before] {
                out.push_str(&format!(" {line}\n"));
            }
            for line in &l[r.start + r.before..r.start + r.before + r.removed] {
                out.push_str(&format!("-{line}\n"));
            }
            for line in &r.added {
                out.push_str(&format!("+{line}\n"));
            }
            for line in &l[r.start + r.before + r.removed..r.start + r.old_len()] {
                out.push_str(&format!(" {line}\n"));
            }
            delta += new_len as i64 - r.old_len() as i64;
        }
        out
    }

    /// Naive splice: copy untouched lines, drop removed ones, insert added ones.
    pub fn expected(&self) -> String {
        let mut out: Vec<&str> = Vec::new();
        let mut i = 0;
        for r in &self.regions {
            out.extend(self.lines[i..r.start + r.before].iter().map(String::as_str));
            out.extend(r.added.iter().map(String::as_str));
            i = r.start + r.before + r.removed;
        }
        out.extend(self.lines[i..].iter().map(String::as_str));
        format!("{}\n", out.join("\n"))
    }

    pub fn apply(&self, shift: i64, max_fuzz: usize) -> Option<String> {
        let patch = parse_patch(&self.patch_text(shift)).expect("generated patch parses");
        apply_to_text(&self.original, &patch.files[0].hunks, max_fuzz).0
    }

    pub fn max_shift(&self) -> i64 {
        6
    }
}

/// Agreement with the splice oracle at zero fuzz.
pub fn splice_agrees(case: &SpliceCase) -> Result<(), String> {
    match case.apply(0, 0) {
        Some(got) if got == case.expected() => Ok(()),
        Some(got) => Err(format!(
            "mismatch\npatch:\n{}\ngot:\n{got}\nexpected:\n{}",
            case.patch_text(0),
            case.expected()
        )),
        None => Err(format!("exact patch failed to apply:\n{}", case.patch_text(0))),
    }
}

/// A multi-file patch whose last hunk cannot match leaves the tree untouched.
pub fn atomicity_holds(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let files = rng.gen_range(2..=4);
    let mut tree = MemTree::new();
    let mut text = String::new();
    for f in 0..files {
        let case = SpliceCase::random(rng, false);
        let path = format!("f{f}.txt");
        tree.insert(PathBuf::from(&path), case.original.clone().into_bytes());
        let mut diff = case.patch_text(0).replace("f.txt", &path);
        if f == files - 1 {
            // Corrupt one old-side line of the last hunk.
            let idx = diff
                .rfind("\n ")
                .or_else(|| diff.rfind("\n-"))
                .expect("hunk has old lines");
            diff.insert_str(idx + 2, "\u{1}never present\u{1} ");
        }
        text.push_str(&diff);
    }
    let patch = parse_patch(&text).map_err(|e| e.to_string())?;
    let before = tree.clone();
    let report = apply(&mut tree, &patch, 3);
    if report.is_applied() {
        return Err("corrupted patch applied".into());
    }
    if tree != before {
        return Err("failed apply modified the tree".into());
    }
    Ok(())
}

/// Success at fuzz f implies success with identical output at every larger
/// fuzz; with unique lines, success happens exactly when f >= |shift|.
pub fn fuzz_monotone(case: &SpliceCase, shift: i64) -> Result<(), String> {
    let mut first_ok: Option<(usize, String)> = None;
    for f in 0..=8usize {
        let got = case.apply(shift, f);
        match (&first_ok, got) {
            (None, Some(text)) => {
                if (f as i64) < shift.abs() {
                    return Err(format!("applied at fuzz {f} with shift {shift}"));
                }
                if text != case.expected() {
                    return Err(format!("fuzzed placement produced wrong text at fuzz {f}"));
                }
                first_ok = Some((f, text));
            }
            (None, None) => {
                if f as i64 >= shift.abs() {
                    return Err(format!("failed at fuzz {f} with shift {shift}"));
                }
            }
            (Some((f0, t0)), got) => {
                if got.as_ref() != Some(t0) {
                    return Err(format!("applied at fuzz {f0} but not identically at fuzz {f}"));
                }
            }
        }
    }
    Ok(())
}

/// Selection input: per attempt, `None` when unappliable, else pass flags per
/// test plus whether its diff is empty.
#[derive(Debug, Clone)]
pub struct SelectionCase {
    pub kinds: Vec<TestKind>,
    pub initially_passing: Vec<bool>,
    pub attempts: Vec<Option<(Vec<bool>, bool)>>,
}

impl SelectionCase {
    pub fn random(rng: &mut ChaCha8Rng, max_attempts: usize, max_tests: usize) -> Self {
        let tests = rng.gen_range(1..=max_tests);
        let kinds: Vec<TestKind> = (0..tests)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    TestKind::Reproduction
                } else {
                    TestKind::Regression
                }
            })
            .collect();
        let initially_passing: Vec<bool> = kinds
            .iter()
            .map(|k| *k == TestKind::Regression && rng.gen_bool(0.85))
            .collect();
        let attempts = (0..rng.gen_range(1..=max_attempts))
            .map(|_| {
                if rng.gen_bool(0.15) {
                    None
                } else {
                    let p = rng.gen_range(0.2..0.95);
                    Some(((0..tests).map(|_| rng.gen_bool(p)).collect(), rng.gen_bool(0.1)))
                }
            })
            .collect();
        SelectionCase {
            kinds,
            initially_passing,
            attempts,
        }
    }

    fn name(i: usize) -> String {
        format!("t{i}")
    }

    pub fn manifest(&self) -> TestManifest {
        let tests = self
            .kinds
            .iter()
            .enumerate()
            .map(|(i, k)| TestRef {
                name: Self::name(i),
                file: "tests/t.py".into(),
                line: i + 1,
                source: "def t(): pass".into(),
                kind: *k,
                origin: TestOrigin::Human,
            })
            .collect();
        let (passing, failing): (Vec<usize>, Vec<usize>) =
            (0..self.kinds.len()).partition(|i| self.initially_passing[*i]);
        TestManifest {
            tests,
            failing: failing.into_iter().map(Self::name).collect(),
            passing: passing.into_iter().map(Self::name).collect(),
        }
    }

    pub fn attempts(&self) -> Vec<PatchAttempt> {
        self.attempts
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let test_state = a.as_ref().map(|(passes, _)| {
                    let mut s = TestState::default();
                    for (t, p) in passes.iter().enumerate() {
                        let status = if *p { TestStatus::Passed } else { TestStatus::Failed };
                        s.insert(Self::name(t), TestOutcome::new(status, "", 0.0));
                    }
                    s
                });
                let empty = a.as_ref().is_none_or(|(_, e)| *e);
                PatchAttempt {
                    index: i as u32 + 1,
                    proposed_patch: "p".into(),
                    patch_text: "p".into(),
                    apply_result: if a.is_some() {
                        ApplyResult::Applied
                    } else {
                        ApplyResult::Unappliable
                    },
                    apply_error: None,
                    final_diff: if empty { String::new() } else { format!("diff {i}\n") },
                    test_state,
                    reports: Vec::new(),
                    start_tree_hash: String::new(),
                }
            })
            .collect()
    }

    /// Brute force: score every attempt, then scan for the best one.
    pub fn oracle(&self) -> Option<u32> {
        let eligible = |a: &Option<(Vec<bool>, bool)>| -> Option<usize> {
            let (passes, empty) = a.as_ref()?;
            if *empty {
                return None;
            }
            let keeps = (0..passes.len()).all(|t| !self.initially_passing[t] || passes[t]);
            keeps.then(|| {
                (0..passes.len())
                    .filter(|t| self.kinds[*t] == TestKind::Reproduction && passes[*t])
                    .count()
            })
        };
        let scores: BTreeMap<usize, usize> = self
            .attempts
            .iter()
            .enumerate()
            .filter_map(|(i, a)| eligible(a).map(|s| (i, s)))
            .collect();
        let best = *scores.values().max()?;
        scores.iter().find(|(_, s)| **s == best).map(|(i, _)| *i as u32 + 1)
    }

    pub fn check(&self) -> Result<(), String> {
        let manifest = self.manifest();
        let attempts = self.attempts();
        let got = select_final_patch(&attempts, &manifest).map(|a| a.index);
        if got != self.oracle() {
            return Err(format!("selected {got:?}, oracle {:?} for {self:?}", self.oracle()));
        }
        if let Some(idx) = got {
            let a = &attempts[idx as usize - 1];
            let state = a.test_state.as_ref().unwrap();
            if manifest.passing.iter().any(|t| !state.passes(t)) {
                return Err(format!("selected attempt {idx} breaks a regression test"));
            }
        }
        Ok(())
    }
}

/// Every pass/fail matrix of `attempts` x `tests`. Kind splits are also
/// enumerated when that stays within 2^16 cases; otherwise kinds alternate.
pub fn exhaustive_selection(attempts: usize, tests: usize) -> Result<usize, String> {
    let cells = attempts * tests;
    assert!(cells <= 16);
    let kind_masks: Vec<u32> = if cells + tests <= 16 {
        (0..(1u32 << tests)).collect()
    } else {
        vec![0b0101_0101]
    };
    let mut checked = 0;
    for kinds_mask in kind_masks {
        let kinds: Vec<TestKind> = (0..tests)
            .map(|t| {
                if kinds_mask >> t & 1 == 1 {
                    TestKind::Reproduction
                } else {
                    TestKind::Regression
                }
            })
            .collect();
        let initially_passing: Vec<bool> = kinds.iter().map(|k| *k == TestKind::Regression).collect();
        for matrix in 0..(1u64 << cells) {
            let attempts_v = (0..attempts)
                .map(|a| Some(((0..tests).map(|t| matrix >> (a * tests + t) & 1 == 1).collect(), false)))
                .collect();
            SelectionCase {
                kinds: kinds.clone(),
                initially_passing: initially_passing.clone(),
                attempts: attempts_v,
            }
            .check()?;
            checked += 1;
        }
    }
    Ok(checked)
}

/// Matrix shapes checked exhaustively, spanning both extremes of 10 x 8.
pub const EXHAUSTIVE_SHAPES: [(usize, usize); 9] =
    [(10, 1), (8, 2), (5, 3), (4, 4), (3, 5), (2, 8), (1, 8), (3, 3), (2, 2)];
