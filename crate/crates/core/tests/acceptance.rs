//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use testfix_core::patch::parse_patch;
use testfix_core::sandbox::{Snapshot, TestRunner};
use testfix_core::Outcome;

use common::oracles::{
    atomicity_holds, exhaustive_selection, fuzz_monotone, splice_agrees, SelectionCase, SpliceCase, EXHAUSTIVE_SHAPES,
};
use common::suites;
use common::*;

const BUDGET: Duration = Duration::from_secs(60);

fn end_to_end() -> Result<String, String> {
    let config = fast_config();
    let started = Instant::now();
    let first = run_fixture("solve", &config, true);
    let elapsed = started.elapsed();
    let r = first.result.as_ref().map_err(|e| e.to_string())?;
    if r.state.outcome != Outcome::Solved || r.state.iteration != 2 {
        return Err(format!(
            "outcome {:?} after {} iterations",
            r.state.outcome, r.state.iteration
        ));
    }
    let diff = r.final_patch.as_ref().ok_or("no final diff")?;
    let dir = repo();
    let snapshot = Snapshot::capture(dir.path()).map_err(|e| e.to_string())?;
    let patch = parse_patch(diff).map_err(|e| e.to_string())?;
    let copy = snapshot.checkout(Some(&patch), 0).map_err(|e| e.to_string())?;
    let runner = TestRunner::new(TEST_COMMAND, &config).map_err(|e| e.to_string())?;
    let state = runner.run_all(copy.root(), r.manifest.tests.iter().map(|t| t.name.as_str()));
    let passing = state.passing().count();
    if passing != 5 {
        return Err(format!("final diff passes {passing}/5 tests"));
    }
    let second = run_fixture("solve", &config, true);
    if first.jsonl != second.jsonl {
        return Err("audit logs differ between runs".into());
    }
    if elapsed > BUDGET {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!(
        "solved in 2 iterations, 5/5 tests, identical {}-line log, {:.1}s",
        first.jsonl.lines().count(),
        elapsed.as_secs_f64()
    ))
}

/// Runs the exhaustion script once; the sandbox criterion reuses the result.
fn exhaustion(run: &Run, elapsed: Duration) -> Result<String, String> {
    let r = run.result.as_ref().map_err(|e| e.to_string())?;
    if r.state.outcome != Outcome::Exhausted || r.state.iteration != 10 {
        return Err(format!(
            "outcome {:?} after {} iterations",
            r.state.outcome, r.state.iteration
        ));
    }
    if r.selected_attempt.is_some() || r.final_patch.is_some() {
        return Err("an attempt was selected".into());
    }
    if r.exit_code() != 2 {
        return Err(format!("exit code {}", r.exit_code()));
    }
    if elapsed > BUDGET {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!(
        "exhausted after 10 iterations, nothing selected, exit 2, {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn patch_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut hunks = 0;
    for i in 0..1500 {
        let case = SpliceCase::random(&mut rng, i % 2 == 0);
        hunks += case.patch_text(0).lines().filter(|l| l.starts_with("@@")).count();
        splice_agrees(&case)?;
    }
    for _ in 0..300 {
        atomicity_holds(&mut rng)?;
    }
    let mut shifted = 0;
    for _ in 0..300 {
        let case = SpliceCase::random(&mut rng, true);
        for shift in -6..=6 {
            fuzz_monotone(&case, shift)?;
            shifted += 1;
        }
    }
    Ok(format!(
        "1500 splice cases ({hunks} hunks) agree, 300 atomicity cases, {shifted} shifted cases monotone"
    ))
}

fn selection_oracle() -> Result<String, String> {
    let mut exhaustive = 0;
    for (a, t) in EXHAUSTIVE_SHAPES {
        exhaustive += exhaustive_selection(a, t)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5000 {
        SelectionCase::random(&mut rng, 10, 8).check()?;
    }
    Ok(format!(
        "{exhaustive} exhaustive matrices (all shapes up to 16 cells, incl. 10x1 and 2x8) and 5000 random up to 10x8"
    ))
}

fn sandbox(run: &Run) -> Result<String, String> {
    let r = run.result.as_ref().map_err(|e| e.to_string())?;
    let bad: Vec<u32> = r
        .state
        .attempts
        .iter()
        .filter(|a| a.start_tree_hash != r.initial_tree_hash)
        .map(|a| a.index)
        .collect();
    if r.state.attempts.len() != 10 || !bad.is_empty() {
        return Err(format!("{} attempts, hash mismatch at {bad:?}", r.state.attempts.len()));
    }
    suites::sandbox_reset()?;
    Ok("10/10 iteration start hashes equal the initial hash; reset suite passes".into())
}

fn main() {
    let started = Instant::now();
    let exhaustion_run = run_fixture("noop", &fast_config(), false);
    let exhaustion_time = started.elapsed();

    let checks: Vec<(&str, Box<dyn Fn() -> Result<String, String> + '_>)> = vec![
        ("end-to-end mock run", Box::new(end_to_end)),
        (
            "exhaustion path",
            Box::new(|| exhaustion(&exhaustion_run, exhaustion_time)),
        ),
        ("patch-engine oracle", Box::new(patch_oracle)),
        ("selection oracle", Box::new(selection_oracle)),
        (
            "classification and BTR",
            Box::new(|| suites::classification().map(|_| "four classes, exact BTR, shares sum to 1".into())),
        ),
        (
            "guard suite",
            Box::new(|| {
                suites::guard_suite()
                    .map(|_| "escapes refused, test edits refused and flagged, skip/runner flags".into())
            }),
        ),
        ("sandbox reset", Box::new(|| sandbox(&exhaustion_run))),
        (
            "debugger whitelist and stub conformance",
            Box::new(|| {
                suites::debugger_conformance().map(|_| "all verbs accepted, others rejected, stub modes handled".into())
            }),
        ),
    ];

    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
