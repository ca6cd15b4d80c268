//! `evaluate`: gold-relative classification, BTR, hack screening and the
//! aggregate tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use testfix_core::metrics::{
    aggregate_success_by_btr, class_counts, classify_tests, compute_btr, default_bins, default_profiles, screen_patch,
    verdict, BtrRow, BtrStat, ScreenContext,
};
use testfix_core::patch::parse_patch;
use testfix_core::sandbox::{Snapshot, TestRunner};
use testfix_core::tools::TestGuard;
use testfix_core::util::write_atomic;
use testfix_core::{HackVerdict, OutcomeClass, TestOrigin, WorkflowConfig};

use crate::bundle::InstanceBundle;
use crate::{write_json, CliError, EvaluateArgs};

/// Evaluation of one run directory.
#[derive(Debug, Clone)]
pub struct RunEvaluation {
    pub run: PathBuf,
    pub bundle: PathBuf,
    pub outcome: String,
    pub solved: bool,
    /// Test name, origin and class, in manifest order.
    pub classes: Vec<(String, TestOrigin, OutcomeClass)>,
    /// `None` when the run has no generated tests.
    pub btr: Option<BtrStat>,
    pub verdict: Option<HackVerdict>,
}

impl RunEvaluation {
    fn generated_classes(&self) -> Vec<OutcomeClass> {
        self.classes
            .iter()
            .filter(|(_, o, _)| *o == TestOrigin::Llm)
            .map(|(_, _, c)| *c)
            .collect()
    }

    fn to_json(&self) -> Value {
        let classes: BTreeMap<&str, &str> = self.classes.iter().map(|(n, _, c)| (n.as_str(), c.as_str())).collect();
        json!({
            "run": self.run,
            "bundle": self.bundle,
            "outcome": self.outcome,
            "solved": self.solved,
            "classes": classes,
            "generated_tests": self.generated_classes().len(),
            "btr": match &self.btr {
                Some(s) => json!(s),
                None => json!("not_applicable"),
            },
            "hack_verdict": self.verdict,
        })
    }
}

fn read_summary(run: &Path) -> Result<Value, CliError> {
    let path = run.join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn evaluate_run(run: &Path, bundle_override: Option<&Path>) -> Result<RunEvaluation, CliError> {
    let summary = read_summary(run)?;
    let bundle_dir = match bundle_override {
        Some(b) => b.to_path_buf(),
        None => summary["bundle"]
            .as_str()
            .map(PathBuf::from)
            .ok_or_else(|| CliError::Usage(format!("{}: summary names no bundle; pass --bundle", run.display())))?,
    };
    let bundle = InstanceBundle::load(&bundle_dir)?;
    let (_, gold) = bundle
        .gold_patch
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("bundle {} has no gold patch", bundle.dir.display())))?;
    let config: WorkflowConfig = summary
        .get("config")
        .and_then(|c| serde_json::from_value(c.clone()).ok())
        .unwrap_or_default();

    let snapshot = Snapshot::capture(&bundle.issue.repo_root)?;
    let runner = TestRunner::new(&bundle.issue.test_command_template, &config)?;
    let names: Vec<String> = bundle.manifest.tests.iter().map(|t| t.name.clone()).collect();
    let by_name = classify_tests(&snapshot, gold, &runner, &names, config.max_fuzz as usize)?;
    let classes: Vec<(String, TestOrigin, OutcomeClass)> = bundle
        .manifest
        .tests
        .iter()
        .map(|t| (t.name.clone(), t.origin, by_name[&t.name]))
        .collect();
    let generated: Vec<OutcomeClass> = classes
        .iter()
        .filter(|(_, o, _)| *o == TestOrigin::Llm)
        .map(|(_, _, c)| *c)
        .collect();
    let btr = if generated.is_empty() {
        None
    } else {
        Some(compute_btr(&generated)?)
    };

    let diff_path = run.join("final.diff");
    let verdict = match std::fs::read_to_string(&diff_path) {
        Ok(text) if !text.trim().is_empty() => {
            let patch = parse_patch(&text)?;
            let guard = TestGuard::new(&bundle.manifest, &config)?;
            let ctx = ScreenContext::new(&guard, &bundle.manifest, &bundle.issue.test_command_template);
            Some(verdict(
                screen_patch(&patch, &ctx),
                &default_profiles(),
                config.hack_vote_threshold,
            ))
        }
        _ => None,
    };
    let outcome = summary["outcome"].as_str().unwrap_or("unknown").to_string();
    let hacked = verdict.as_ref().is_some_and(|v| v.hacked);
    Ok(RunEvaluation {
        run: run.to_path_buf(),
        bundle: bundle.dir.clone(),
        solved: outcome == "solved" && !hacked,
        outcome,
        classes,
        btr,
        verdict,
    })
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Usage(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Usage(format!("csv: {e}")))
}

/// For each class (and the total), how many instances have k generated tests of it.
pub fn test_count_histogram(evals: &[RunEvaluation]) -> BTreeMap<(String, usize), usize> {
    let mut hist = BTreeMap::new();
    for e in evals {
        let classes = e.generated_classes();
        if classes.is_empty() {
            continue;
        }
        for (class, n) in class_counts(&classes) {
            *hist.entry((class.as_str().to_string(), n)).or_default() += 1;
        }
        *hist.entry(("total".to_string(), classes.len())).or_default() += 1;
    }
    hist
}

pub fn success_by_btr(evals: &[RunEvaluation]) -> Result<Option<Vec<BtrRow>>, CliError> {
    let runs: Vec<(BtrStat, bool)> = evals.iter().filter_map(|e| e.btr.map(|b| (b, e.solved))).collect();
    if runs.is_empty() {
        return Ok(None);
    }
    Ok(Some(aggregate_success_by_btr(&runs, &default_bins())?))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<i32, CliError> {
    let evals = args
        .runs
        .iter()
        .map(|r| evaluate_run(r, args.bundle.as_deref()))
        .collect::<Result<Vec<_>, _>>()?;
    let table = success_by_btr(&evals)?;
    let hist = test_count_histogram(&evals);
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Usage(format!("{}: {e}", args.out.display())))?;

    let solved = evals.iter().filter(|e| e.solved).count();
    let metrics = json!({
        "runs": evals.iter().map(RunEvaluation::to_json).collect::<Vec<_>>(),
        "instances": evals.len(),
        "solved": solved,
        "solve_rate": solved as f64 / evals.len() as f64,
        "hacked": evals.iter().filter(|e| e.verdict.as_ref().is_some_and(|v| v.hacked)).count(),
        "success_by_btr": match &table {
            Some(rows) => json!(rows),
            None => json!("not_applicable"),
        },
    });
    write_json(&args.out.join("metrics.json"), &metrics)?;

    let rows = table.iter().flatten().map(|r| {
        vec![
            r.bin.clone(),
            r.lo.to_string(),
            r.hi.to_string(),
            r.instances.to_string(),
            r.solved.to_string(),
            format!("{:.6}", r.solve_rate),
            format!("{:.6}", r.share),
        ]
    });
    let bytes = csv_bytes(&["bin", "lo", "hi", "instances", "solved", "solve_rate", "share"], rows)?;
    write_atomic(&args.out.join("success_by_btr.csv"), &bytes)?;

    let rows = evals.iter().flat_map(|e| {
        e.classes.iter().map(|(name, origin, class)| {
            let origin = match origin {
                TestOrigin::Human => "human",
                TestOrigin::Llm => "generated",
            };
            vec![
                e.run.display().to_string(),
                name.clone(),
                origin.to_string(),
                class.as_str().to_string(),
            ]
        })
    });
    let bytes = csv_bytes(&["run", "test", "origin", "class"], rows)?;
    write_atomic(&args.out.join("outcome_classes.csv"), &bytes)?;

    let rows = hist
        .iter()
        .map(|((class, n), count)| vec![class.clone(), n.to_string(), count.to_string()]);
    let bytes = csv_bytes(&["class", "tests_per_instance", "instances"], rows)?;
    write_atomic(&args.out.join("test_count_histogram.csv"), &bytes)?;

    eprintln!(
        "evaluated {} run(s): {solved} solved; BTR {}",
        evals.len(),
        if table.is_some() {
            "table written"
        } else {
            "not applicable (no generated tests)"
        }
    );
    Ok(0)
}
