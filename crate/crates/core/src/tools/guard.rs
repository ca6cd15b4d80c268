use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use globset::{GlobBuilder, GlobSet, GlobSetBuilder};

use crate::config::WorkflowConfig;
use crate::error::{Error, Result};
use crate::manifest::TestManifest;
use crate::metrics::HackCategory;
use crate::patch::Patch;

/// Repo paths that patches may not touch: every manifest test file plus
/// anything under a test folder or matching a test file-name glob.
#[derive(Debug, Clone)]
pub struct TestGuard {
    files: BTreeSet<PathBuf>,
    globs: GlobSet,
}

impl TestGuard {
    pub fn new(manifest: &TestManifest, config: &WorkflowConfig) -> Result<Self> {
        let mut builder = GlobSetBuilder::new();
        let mut add = |pattern: String| -> Result<()> {
            let glob = GlobBuilder::new(&pattern)
                .literal_separator(true)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("bad test path pattern {pattern:?}: {e}")))?;
            builder.add(glob);
            Ok(())
        };
        for dir in &config.test_dir_names {
            add(format!("{dir}/**"))?;
            add(format!("**/{dir}/**"))?;
        }
        for name in &config.test_file_globs {
            add(name.clone())?;
            add(format!("**/{name}"))?;
        }
        let globs = builder
            .build()
            .map_err(|e| Error::InvalidConfig(format!("test path patterns: {e}")))?;
        Ok(TestGuard {
            files: manifest.test_files(),
            globs,
        })
    }

    /// Adds a file, e.g. a newly registered generated test file.
    pub fn protect(&mut self, file: impl Into<PathBuf>) {
        self.files.insert(file.into());
    }

    pub fn is_protected(&self, path: &Path) -> bool {
        self.files.contains(path) || self.globs.is_match(path)
    }

    /// Protected files among `patch`'s targets, in path order.
    pub fn violations(&self, patch: &Patch) -> Vec<PathBuf> {
        patch
            .touched_files()
            .into_iter()
            .filter(|p| self.is_protected(p))
            .collect()
    }

    /// Refusal text for a patch touching protected paths, or `None` when clean.
    pub fn refusal(&self, patch: &Patch) -> Option<String> {
        let bad = self.violations(patch);
        if bad.is_empty() {
            return None;
        }
        let list: Vec<String> = bad.iter().map(|p| p.display().to_string()).collect();
        Some(format!(
            "Patch refused ({}): it modifies protected test paths: {}. Tests cannot be changed; fix the code under test instead.",
            HackCategory::TestsDirectlyModified,
            list.join(", ")
        ))
    }
}
