//! Core of the test-driven repair orchestrator.

pub mod agent;
pub mod audit;
pub mod config;
pub mod debugger;
pub mod error;
pub mod generate;
pub mod manifest;
pub mod metrics;
pub mod patch;
pub mod sandbox;
pub mod tools;
pub mod util;
pub mod workflow;

pub use config::{ConfigOverrides, WorkflowConfig};
pub use error::{Error, Result};
pub use manifest::{IssueSpec, TestKind, TestManifest, TestOrigin, TestRef};
pub use metrics::{HackCategory, HackFlag, HackVerdict, OutcomeClass};
pub use patch::Patch;
pub use workflow::{Outcome, PatchAttempt, RunResult, Workflow, WorkflowState};
