use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{ClosedLoopRun, RunStatus};
use crate::geometry::SetRep;
use crate::synthesis::PatchyFeedback;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecreaseReport {
    /// Largest finite-difference rate of `Δ_S` on crown steps driven by boundary patches.
    pub worst_rate: Option<f64>,
    pub steps_checked: usize,
    pub bound: f64,
    pub pass: bool,
}

/// Rate of `Δ_S` per unit time on every step that starts and ends in the crown `Q(S, r̃)`
/// under a boundary patch; passes iff all rates are `≤ -ε_dec/2 + tol_fd`.
pub fn signed_distance_decrease_probe(
    run: &ClosedLoopRun,
    s: &SetRep,
    fb: &PatchyFeedback,
    r_tilde: f64,
    eps_dec: f64,
    tol_fd: f64,
) -> DecreaseReport {
    let in_crown = |x: &[f64]| {
        let sd = s.signed_distance(x);
        sd <= 0.0 && -sd < r_tilde
    };
    let mut worst: Option<f64> = None;
    let mut n = 0;
    for k in 0..run.states.len().saturating_sub(1) {
        let Some(a) = run.patches.get(k).copied().flatten() else { continue };
        if !fb.patches[a].is_boundary() {
            continue;
        }
        let (x0, x1) = (&run.states[k], &run.states[k + 1]);
        let h = run.times[k + 1] - run.times[k];
        if h <= 0.0 || !in_crown(x0) || !in_crown(x1) {
            continue;
        }
        let rate = (s.signed_distance(x1) - s.signed_distance(x0)) / h;
        worst = Some(worst.map_or(rate, |w: f64| w.max(rate)));
        n += 1;
    }
    let bound = -eps_dec / 2.0 + tol_fd;
    DecreaseReport { worst_rate: worst, steps_checked: n, bound, pass: worst.is_none_or(|w| w <= bound) }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunVerdict {
    pub pass: bool,
    pub status: RunStatus,
    pub reach_time: Option<f64>,
    /// `max(0, max_k Δ_S(x_k))`.
    pub violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizationSummary {
    pub total: usize,
    pub passed: usize,
    pub max_reach_time: Option<f64>,
    pub worst_violation: f64,
    pub runs: Vec<RunVerdict>,
}

impl StabilizationSummary {
    pub fn all_pass(&self) -> bool {
        self.passed == self.total
    }
}

/// A run passes when it stays in `S` up to `tol_bd` and ends inside `Σ^δ`.
pub fn verify_stabilization(runs: &[ClosedLoopRun], s: &SetRep, target: &SetRep, delta: f64, tol_bd: f64) -> StabilizationSummary {
    let runs: Vec<RunVerdict> = runs
        .iter()
        .map(|r| {
            let violation = r.states.iter().map(|x| s.signed_distance(x)).fold(0.0, f64::max);
            let reached = r.status == RunStatus::Reached && target.distance(r.last()) <= delta;
            RunVerdict {
                pass: reached && violation <= tol_bd,
                status: r.status,
                reach_time: reached.then(|| r.end_time()),
                violation,
            }
        })
        .collect();
    StabilizationSummary {
        total: runs.len(),
        passed: runs.iter().filter(|v| v.pass).count(),
        max_reach_time: runs.iter().filter_map(|v| v.reach_time).reduce(f64::max),
        worst_violation: runs.iter().map(|v| v.violation).fold(0.0, f64::max),
        runs,
    }
}

/// `run,t,x0,…,patch` rows; the patch column is empty outside `D`.
pub fn runs_csv(runs: &[ClosedLoopRun]) -> String {
    let dim = runs.iter().find_map(|r| r.states.first().map(Vec::len)).unwrap_or(0);
    let mut out = String::from("run,t");
    for i in 0..dim {
        let _ = write!(out, ",x{i}");
    }
    out.push_str(",patch\n");
    for (k, r) in runs.iter().enumerate() {
        for (j, x) in r.states.iter().enumerate() {
            let _ = write!(out, "{k},{}", r.times[j]);
            for v in x {
                let _ = write!(out, ",{v}");
            }
            match r.patches.get(j).copied().flatten() {
                Some(a) => {
                    let _ = writeln!(out, ",{a}");
                }
                None => out.push_str(",\n"),
            }
        }
    }
    out
}
