//! One pass/fail line per acceptance criterion, written straight to stderr so
//! it shows without `--nocapture`. Tolerances are pinned here.

use std::io::Write;
use std::path::{Path, PathBuf};

mod codec;
mod corpus;
mod desk;
mod model;
mod taxonomy;

/// Desk-scale corpus (n = 20,000, seed 7) and trained run, committed.
pub fn artifacts() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../artifacts")
}

pub fn desk_data() -> PathBuf {
    artifacts().join("desk/data")
}

pub fn verdict(n: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("criterion {n:>2} {} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = writeln!(std::io::stderr().lock(), "{line}");
    assert!(pass, "{line}");
}
