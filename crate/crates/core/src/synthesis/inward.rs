use serde::{Deserialize, Serialize};

use super::PatchyFeedback;
use crate::dynamics::ControlSystem;
use crate::linalg::dot;
use crate::Point;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InwardReport {
    /// Largest `f(z, u_α)·n(z)` per patch; `None` when no effective boundary sample lies in `D`.
    pub per_patch: Vec<Option<f64>>,
    pub worst: f64,
    pub worst_point: Option<Point>,
    pub worst_patch: Option<usize>,
    pub samples_checked: usize,
    pub pass: bool,
}

/// Samples the effective boundary `∂Ω_α \ ∪_{β>α} Ω_β` inside `D` and records
/// the largest normal velocity per patch. Passes iff every maximum is negative.
pub fn check_inward_sampled(sys: &ControlSystem, fb: &PatchyFeedback, n: usize) -> InwardReport {
    let s = &fb.constraint;
    let mut per_patch = Vec::with_capacity(fb.len());
    let mut worst = f64::NEG_INFINITY;
    let mut worst_point = None;
    let mut worst_patch = None;
    let mut checked = 0;
    for (i, patch) in fb.patches.iter().enumerate() {
        let mut m: Option<f64> = None;
        for (z, nrm) in patch.domain.boundary_samples_2d(s, n) {
            if fb.is_excluded(&z) || fb.top_patch(&z).is_none() {
                continue;
            }
            if fb.top_patch(&z).is_some_and(|a| a > i) {
                continue;
            }
            checked += 1;
            let v = dot(&sys.eval(&z, &patch.control_value), &nrm);
            m = Some(m.map_or(v, |c: f64| c.max(v)));
            if v > worst {
                worst = v;
                worst_point = Some(z.clone());
                worst_patch = Some(i);
            }
        }
        per_patch.push(m);
    }
    let pass = per_patch.iter().all(|m| m.is_none_or(|v| v < 0.0));
    InwardReport { per_patch, worst, worst_point, worst_patch, samples_checked: checked, pass }
}
