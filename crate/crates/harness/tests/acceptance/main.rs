//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the verdict lines reach the console even when
//! cargo captures test output. `VICHAN_ACCEPTANCE=6,7` restricts the run.

mod loss;
mod network;
mod pipeline;
mod stats;
mod training;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

/// Outcome of one criterion: pass flag and a short measurement summary.
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

type Criterion = (u32, &'static str, fn() -> Verdict);

const CRITERIA: &[Criterion] = &[
    (1, "channel-stats oracle", stats::oracle_equivalence),
    (2, "closed-form spot checks", stats::closed_forms),
    (3, "composite loss", loss::composite_loss),
    (4, "circular equivariance", network::circular_equivariance),
    (5, "output constraints", network::output_constraints),
    (6, "overfit sanity", training::overfit_sanity),
    (7, "directional ablation", training::directional_ablation),
    (8, "dynamic removal", pipeline::dynamic_removal),
    (9, "pipeline integrity", pipeline::pipeline_integrity),
    (10, "complexity accounting", network::complexity_accounting),
];

fn main() {
    let only: Option<Vec<u32>> = std::env::var("VICHAN_ACCEPTANCE").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for &(id, name, run) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Verdict::new(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        println!("{} criterion {id:>2} ({name}): {} [{secs:.1}s]", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
