use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patch::Patch;
use crate::sandbox::{Snapshot, TestRunner};

/// Gold-relative class of a test: status before and after the gold patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeClass {
    F2p,
    P2p,
    P2f,
    F2f,
}

impl OutcomeClass {
    pub const ALL: [OutcomeClass; 4] = [
        OutcomeClass::F2p,
        OutcomeClass::P2p,
        OutcomeClass::P2f,
        OutcomeClass::F2f,
    ];

    /// Errored and timed-out runs count as failures.
    pub fn from_runs(passed_before: bool, passed_after: bool) -> Self {
        match (passed_before, passed_after) {
            (false, true) => OutcomeClass::F2p,
            (true, true) => OutcomeClass::P2p,
            (true, false) => OutcomeClass::P2f,
            (false, false) => OutcomeClass::F2f,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeClass::F2p => "f2p",
            OutcomeClass::P2p => "p2p",
            OutcomeClass::P2f => "p2f",
            OutcomeClass::F2f => "f2f",
        }
    }

    pub fn is_successful_reproduction(self) -> bool {
        self == OutcomeClass::F2p
    }
}

impl fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Runs `tests` on a clean copy and on a gold-patched copy of `snapshot`.
pub fn classify_tests(
    snapshot: &Snapshot,
    gold: &Patch,
    runner: &TestRunner,
    tests: &[String],
    max_fuzz: usize,
) -> Result<BTreeMap<String, OutcomeClass>> {
    let before_copy = snapshot.checkout(None, max_fuzz)?;
    let after_copy = snapshot
        .checkout(Some(gold), max_fuzz)
        .map_err(|e| Error::Evaluation(format!("gold patch does not apply: {e}")))?;
    let before = runner.run_all(before_copy.root(), tests.iter().map(String::as_str));
    let after = runner.run_all(after_copy.root(), tests.iter().map(String::as_str));
    Ok(tests
        .iter()
        .map(|t| (t.clone(), OutcomeClass::from_runs(before.passes(t), after.passes(t))))
        .collect())
}

/// Bad test rate of one instance's generated tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BtrStat {
    pub total_generated: usize,
    pub unsuccessful: usize,
    pub btr: f64,
}

pub fn compute_btr(classes: &[OutcomeClass]) -> Result<BtrStat> {
    if classes.is_empty() {
        return Err(Error::Evaluation("no generated tests: BTR is not applicable".into()));
    }
    let unsuccessful = classes.iter().filter(|c| !c.is_successful_reproduction()).count();
    Ok(BtrStat {
        total_generated: classes.len(),
        unsuccessful,
        btr: unsuccessful as f64 / classes.len() as f64,
    })
}

/// A BTR interval. `lo == hi` is the point bin `[lo, lo]`; otherwise `(lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BtrBin {
    pub lo: f64,
    pub hi: f64,
}

impl BtrBin {
    pub fn contains(&self, btr: f64) -> bool {
        if self.lo == self.hi {
            btr == self.lo
        } else {
            btr > self.lo && btr <= self.hi
        }
    }

    pub fn label(&self) -> String {
        if self.lo == self.hi {
            format!("{}", self.lo)
        } else {
            format!("({}, {}]", self.lo, self.hi)
        }
    }
}

/// `{0}`, then quarters up to 1.
pub fn default_bins() -> Vec<BtrBin> {
    vec![
        BtrBin { lo: 0.0, hi: 0.0 },
        BtrBin { lo: 0.0, hi: 0.25 },
        BtrBin { lo: 0.25, hi: 0.5 },
        BtrBin { lo: 0.5, hi: 0.75 },
        BtrBin { lo: 0.75, hi: 1.0 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtrRow {
    pub bin: String,
    pub lo: f64,
    pub hi: f64,
    pub instances: usize,
    pub solved: usize,
    pub solve_rate: f64,
    pub share: f64,
}

/// Solve rate per BTR bin. Only non-empty bins are emitted, so shares sum to 1.
/// Bins must partition the BTR values present in `runs`.
pub fn aggregate_success_by_btr(runs: &[(BtrStat, bool)], bins: &[BtrBin]) -> Result<Vec<BtrRow>> {
    if runs.is_empty() {
        return Err(Error::Evaluation("no runs to aggregate".into()));
    }
    let mut counts = vec![(0usize, 0usize); bins.len()];
    for (stat, solved) in runs {
        let idx = bins
            .iter()
            .position(|b| b.contains(stat.btr))
            .ok_or_else(|| Error::Evaluation(format!("BTR {} falls outside every bin", stat.btr)))?;
        counts[idx].0 += 1;
        counts[idx].1 += usize::from(*solved);
    }
    let total = runs.len() as f64;
    Ok(bins
        .iter()
        .zip(counts)
        .filter(|(_, (n, _))| *n > 0)
        .map(|(bin, (n, solved))| BtrRow {
            bin: bin.label(),
            lo: bin.lo,
            hi: bin.hi,
            instances: n,
            solved,
            solve_rate: solved as f64 / n as f64,
            share: n as f64 / total,
        })
        .collect())
}

/// Per-class counts, for test-count histograms.
pub fn class_counts(classes: &[OutcomeClass]) -> BTreeMap<OutcomeClass, usize> {
    let mut out: BTreeMap<OutcomeClass, usize> = OutcomeClass::ALL.iter().map(|c| (*c, 0)).collect();
    for c in classes {
        *out.entry(*c).or_default() += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stat(btr_classes: &[OutcomeClass]) -> BtrStat {
        compute_btr(btr_classes).unwrap()
    }

    #[test]
    fn taxonomy_is_total() {
        assert_eq!(OutcomeClass::from_runs(false, true), OutcomeClass::F2p);
        assert_eq!(OutcomeClass::from_runs(true, true), OutcomeClass::P2p);
        assert_eq!(OutcomeClass::from_runs(true, false), OutcomeClass::P2f);
        assert_eq!(OutcomeClass::from_runs(false, false), OutcomeClass::F2f);
    }

    #[test]
    fn btr_arithmetic() {
        use OutcomeClass::*;
        assert_eq!(stat(&[F2p; 4]).btr, 0.0);
        assert_eq!(stat(&[F2p, F2p, F2p, P2p]).btr, 0.25);
        assert_eq!(stat(&[F2f, F2f]).btr, 1.0);
        assert!(compute_btr(&[]).is_err());
    }

    #[test]
    fn zero_is_its_own_bin() {
        let bins = default_bins();
        assert!(bins[0].contains(0.0));
        assert!(!bins[1].contains(0.0));
        assert!(bins[1].contains(0.25));
        assert!(bins[4].contains(1.0));
    }

    #[test]
    fn single_bin_when_all_clean() {
        let runs = vec![(stat(&[OutcomeClass::F2p]), true); 3];
        let rows = aggregate_success_by_btr(&runs, &default_bins()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].solve_rate, 1.0);
        assert_eq!(rows[0].share, 1.0);
    }
}
