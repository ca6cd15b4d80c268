mod common;

use testfix_core::audit::{AuditLog, LogicalClock};
use testfix_core::generate::{generate_tests, persist_generated, register_tests, GenerateRequest};
use testfix_core::metrics::{classify_tests, OutcomeClass};
use testfix_core::patch::parse_patch;
use testfix_core::sandbox::{tree_hash, Snapshot, TestRunner, TestStatus};
use testfix_core::{TestManifest, TestOrigin};

use common::*;

#[test]
fn generated_tests_are_vetted_registered_and_reproduce() {
    let dir = repo();
    let issue = issue(dir.path());
    let manifest = manifest(dir.path());
    let config = fast_config();
    let provider = script("generate");
    let audit = AuditLog::in_memory(Box::new(LogicalClock::default()));
    let before = tree_hash(dir.path()).unwrap();

    let outcome = generate_tests(&GenerateRequest {
        issue: &issue,
        manifest: &manifest,
        config: &config,
        provider: &provider,
        audit: &audit,
        example: None,
    })
    .unwrap();
    assert_eq!(
        tree_hash(dir.path()).unwrap(),
        before,
        "generation touched the repository"
    );

    let accepted: Vec<&str> = outcome.accepted.iter().map(|g| g.test.name.as_str()).collect();
    assert_eq!(
        accepted,
        [
            "tests/test_generated.py::test_median_two_values",
            "tests/test_stats.py::test_median_even_floats"
        ]
    );
    for g in &outcome.accepted {
        assert_eq!(g.initial_status, TestStatus::Failed);
        assert!(g.single_assert);
        assert_eq!(g.test.origin, TestOrigin::Llm);
    }
    let discarded: Vec<&str> = outcome.discarded.iter().map(|d| d.name.as_str()).collect();
    assert_eq!(
        discarded,
        ["tests/test_generated.py::test_median_wrong_name", "not a test name!"]
    );
    assert!(
        outcome.discarded[0].reason.contains("passes"),
        "{}",
        outcome.discarded[0].reason
    );

    let extended = register_tests(&manifest, &outcome.accepted).unwrap();
    assert_eq!(extended.tests.len(), 7);
    assert!(
        register_tests(&extended, &outcome.accepted).is_err(),
        "duplicate names accepted"
    );

    let manifest_path = dir.path().join("manifest.generated.json");
    persist_generated(dir.path(), &outcome, &extended, &manifest_path).unwrap();
    let reloaded = TestManifest::load(&manifest_path, dir.path()).unwrap();
    assert_eq!(reloaded.tests.len(), 7);
    let floats = reloaded.get("tests/test_stats.py::test_median_even_floats").unwrap();
    assert_eq!(floats.line, 23);

    let snapshot = Snapshot::capture(dir.path()).unwrap();
    let gold = parse_patch(&gold_patch()).unwrap();
    let runner = TestRunner::new(TEST_COMMAND, &config).unwrap();
    let names: Vec<String> = accepted.iter().map(|s| s.to_string()).collect();
    let classes = classify_tests(&snapshot, &gold, &runner, &names, 0).unwrap();
    assert!(classes.values().all(|c| *c == OutcomeClass::F2p), "{classes:?}");
}

#[test]
fn nothing_accepted_is_an_error() {
    let dir = repo();
    let issue = issue(dir.path());
    let manifest = manifest(dir.path());
    let config = fast_config();
    let provider = script("generate_none");
    let audit = AuditLog::in_memory(Box::new(LogicalClock::default()));
    let r = generate_tests(&GenerateRequest {
        issue: &issue,
        manifest: &manifest,
        config: &config,
        provider: &provider,
        audit: &audit,
        example: None,
    });
    assert!(matches!(r, Err(testfix_core::Error::GenerateTests(_))), "{:?}", r.err());
}
