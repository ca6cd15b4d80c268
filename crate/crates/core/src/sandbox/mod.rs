//! Repository snapshots, isolated working copies and the test runner.

mod runner;
mod snapshot;

pub use runner::{TestOutcome, TestRunner, TestState, TestStatus};
pub use snapshot::{redact_root, tracked_files, tree_hash, Snapshot, WorkingCopy, LOGICAL_ROOT};
