//! Workflow configuration.
//!
//! The on-disk format is a flat JSON object whose keys are the field names
//! below. Keys may be omitted; omitted keys take the defaults. Precedence for
//! every key is command-line override, then config file, then default.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::Phase;
use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkflowConfig {
    pub num_total_iterations: u32,
    pub max_tests_debug: u32,
    pub generate_tests_max_turns: u32,
    pub debug_one_max_turns: u32,
    pub revise_patch_max_turns: u32,
    pub explore_files_max_turns: u32,
    pub temperature: f64,

    /// Maximum positional slippage, in lines, when placing a hunk.
    pub max_fuzz: u32,
    pub test_timeout_secs: u64,
    pub debug_command_timeout_secs: u64,
    /// Token budget for the previous-attempts section of the Explore Files prompt.
    pub context_token_budget: u64,
    pub page_size: u32,
    pub match_cap: u32,
    /// Depth of the folder tree embedded in the initial Explore Files prompt.
    pub repo_structure_depth: u32,
    /// Concurrent Debug One episodes.
    pub debug_parallelism: u32,
    pub provider_attempts: u32,
    pub provider_backoff_ms: u64,
    pub hack_vote_threshold: u32,
    /// Environment variables passed from the driver into test processes.
    pub env_allowlist: Vec<String>,
    /// Variables set explicitly for test processes.
    pub test_env: BTreeMap<String, String>,
    /// Directory names treated as test folders by the write guard and the screener.
    pub test_dir_names: Vec<String>,
    /// File-name globs treated as test files.
    pub test_file_globs: Vec<String>,
    /// Runner exit codes that mean the test could not run at all.
    pub error_exit_codes: Vec<i32>,
    /// Output substrings that mark a non-zero exit as an error rather than a failure.
    pub error_markers: Vec<String>,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        WorkflowConfig {
            num_total_iterations: 10,
            max_tests_debug: 18,
            generate_tests_max_turns: 200,
            debug_one_max_turns: 250,
            revise_patch_max_turns: 50,
            explore_files_max_turns: 75,
            temperature: 1.0,
            max_fuzz: 2,
            test_timeout_secs: 300,
            debug_command_timeout_secs: 30,
            context_token_budget: 100_000,
            page_size: 400,
            match_cap: 200,
            repo_structure_depth: 3,
            debug_parallelism: 4,
            provider_attempts: 3,
            provider_backoff_ms: 500,
            hack_vote_threshold: 2,
            env_allowlist: ["PATH", "HOME", "LANG", "LC_ALL", "TMPDIR", "PYTHONPATH"]
                .map(String::from)
                .to_vec(),
            test_env: BTreeMap::from([("PYTHONDONTWRITEBYTECODE".into(), "1".into())]),
            test_dir_names: ["tests", "test", "testing", "__tests__"].map(String::from).to_vec(),
            test_file_globs: ["test_*.py", "*_test.py", "conftest.py"].map(String::from).to_vec(),
            error_exit_codes: vec![2, 3, 4, 5],
            error_markers: [
                "ImportError",
                "ModuleNotFoundError",
                "SyntaxError",
                "IndentationError",
                "ERROR collecting",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

impl WorkflowConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: WorkflowConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_total_iterations", self.num_total_iterations as u64),
            ("max_tests_debug", self.max_tests_debug as u64),
            ("generate_tests_max_turns", self.generate_tests_max_turns as u64),
            ("debug_one_max_turns", self.debug_one_max_turns as u64),
            ("revise_patch_max_turns", self.revise_patch_max_turns as u64),
            ("explore_files_max_turns", self.explore_files_max_turns as u64),
            ("test_timeout_secs", self.test_timeout_secs),
            ("debug_command_timeout_secs", self.debug_command_timeout_secs),
            ("context_token_budget", self.context_token_budget),
            ("page_size", self.page_size as u64),
            ("match_cap", self.match_cap as u64),
            ("debug_parallelism", self.debug_parallelism as u64),
            ("provider_attempts", self.provider_attempts as u64),
            ("hack_vote_threshold", self.hack_vote_threshold as u64),
        ];
        for (key, value) in positive {
            if value == 0 {
                return Err(Error::InvalidConfig(format!("{key} must be positive")));
            }
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::InvalidConfig("temperature must be a non-negative number".into()));
        }
        Ok(())
    }

    pub fn max_turns(&self, phase: Phase) -> u32 {
        match phase {
            Phase::GenerateTests => self.generate_tests_max_turns,
            Phase::ExploreFiles => self.explore_files_max_turns,
            Phase::DebugOne => self.debug_one_max_turns,
            Phase::RevisePatch => self.revise_patch_max_turns,
        }
    }

    pub fn apply(&mut self, overrides: &ConfigOverrides) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = overrides.$field { self.$field = v; })*
            };
        }
        take!(
            num_total_iterations,
            max_tests_debug,
            generate_tests_max_turns,
            debug_one_max_turns,
            revise_patch_max_turns,
            explore_files_max_turns,
            temperature,
            max_fuzz,
            test_timeout_secs,
            debug_parallelism
        );
    }

    /// Resolves the effective config: defaults, then the optional file, then overrides.
    pub fn resolve(file: Option<&Path>, overrides: &ConfigOverrides) -> Result<Self> {
        let mut config = match file {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }
}

/// Command-line overrides. `None` leaves the lower-precedence value in place.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub num_total_iterations: Option<u32>,
    pub max_tests_debug: Option<u32>,
    pub generate_tests_max_turns: Option<u32>,
    pub debug_one_max_turns: Option<u32>,
    pub revise_patch_max_turns: Option<u32>,
    pub explore_files_max_turns: Option<u32>,
    pub temperature: Option<f64>,
    pub max_fuzz: Option<u32>,
    pub test_timeout_secs: Option<u64>,
    pub debug_parallelism: Option<u32>,
}
