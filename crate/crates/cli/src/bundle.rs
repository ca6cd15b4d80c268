use std::path::{Path, PathBuf};

use serde::Deserialize;

use testfix_core::patch::{apply, parse_patch};
use testfix_core::sandbox::Snapshot;
use testfix_core::{IssueSpec, Patch, TestManifest, TestRef};

use crate::CliError;

/// Name of the descriptor file inside a bundle directory.
pub const DESCRIPTOR: &str = "instance.json";

/// Substituted with the bundle directory in command templates.
pub const BUNDLE_DIR_PLACEHOLDER: &str = "{bundle_dir}";

/// `instance.json`. Paths are relative to the bundle directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Descriptor {
    issue_file: PathBuf,
    repo: PathBuf,
    manifest: PathBuf,
    #[serde(default)]
    gold_patch: Option<PathBuf>,
    test_command: String,
    #[serde(default)]
    debugger_command: Option<String>,
    /// Name of an existing test shown to the test generator.
    #[serde(default)]
    test_example: Option<String>,
}

/// A validated instance: issue, repository, tests and runner templates.
#[derive(Debug)]
pub struct InstanceBundle {
    pub dir: PathBuf,
    pub issue: IssueSpec,
    pub manifest: TestManifest,
    pub manifest_path: PathBuf,
    pub gold_patch: Option<(String, Patch)>,
    pub debugger_command: Option<String>,
    pub test_example: Option<String>,
}

impl InstanceBundle {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let dir = dir
            .canonicalize()
            .map_err(|e| CliError::Usage(format!("bundle {}: {e}", dir.display())))?;
        let descriptor_path = dir.join(DESCRIPTOR);
        let text = std::fs::read_to_string(&descriptor_path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", descriptor_path.display())))?;
        let d: Descriptor =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", descriptor_path.display())))?;

        let existing = |rel: &Path, what: &str| -> Result<PathBuf, CliError> {
            let p = dir.join(rel);
            if p.exists() {
                Ok(p)
            } else {
                Err(CliError::Usage(format!("bundle {what} {} does not exist", p.display())))
            }
        };
        let issue_path = existing(&d.issue_file, "issue file")?;
        let repo = existing(&d.repo, "repository")?;
        let manifest_path = existing(&d.manifest, "manifest")?;

        let description = std::fs::read_to_string(&issue_path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", issue_path.display())))?;
        let substitute = |t: &str| t.replace(BUNDLE_DIR_PLACEHOLDER, &dir.display().to_string());
        let issue = IssueSpec::new(description, &repo, substitute(&d.test_command)).map_err(usage)?;
        let manifest = TestManifest::load(&manifest_path, &repo).map_err(usage)?;

        let gold_patch = match &d.gold_patch {
            Some(rel) => {
                let path = existing(rel, "gold patch")?;
                let text =
                    std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                let patch = parse_patch(&text).map_err(|e| CliError::Usage(format!("gold patch: {e}")))?;
                let mut tree = Snapshot::capture(&repo).and_then(|s| s.read_tree()).map_err(usage)?;
                let report = apply(&mut tree, &patch, 0);
                if !report.is_applied() {
                    return Err(CliError::Usage(format!(
                        "gold patch does not apply:\n{}",
                        report.render()
                    )));
                }
                Some((text, patch))
            }
            None => None,
        };
        if let Some(name) = &d.test_example {
            if manifest.get(name).is_none() {
                return Err(CliError::Usage(format!("test_example {name} is not in the manifest")));
            }
        }
        let debugger_command = d.debugger_command.as_deref().map(substitute);
        Ok(InstanceBundle {
            dir,
            issue,
            manifest,
            manifest_path,
            gold_patch,
            debugger_command,
            test_example: d.test_example,
        })
    }

    pub fn example(&self) -> Option<&TestRef> {
        self.test_example.as_deref().and_then(|n| self.manifest.get(n))
    }
}

fn usage(e: testfix_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}
