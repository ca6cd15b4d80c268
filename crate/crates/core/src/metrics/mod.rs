//! Offline evaluation: gold-relative test classes, bad test rate, success by
//! BTR, and static test-hacking screens.

mod category;
mod classify;
mod screen;

pub use category::HackCategory;
pub use classify::{
    aggregate_success_by_btr, class_counts, classify_tests, compute_btr, default_bins, BtrBin, BtrRow, BtrStat,
    OutcomeClass,
};
pub use screen::{
    default_profiles, screen_patch, verdict, HackFlag, HackVerdict, ScreenContext, ScreenerProfile, Severity,
};
