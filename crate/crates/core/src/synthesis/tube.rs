use serde::{Deserialize, Serialize};

use super::{ExitCap, Patch, PatchDomain, PatchTag};
use crate::dynamics::{ControlSystem, Trajectory};
use crate::geometry::SetRep;
use crate::linalg::normalized;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TubeConfig {
    /// Segment `j` of `N` uses `θ^(N-1-j)` times the common radius profile.
    pub theta: f64,
    /// Extra exponential growth of the radius: `κ = L_f + growth / T`.
    pub growth: f64,
    pub min_radius: f64,
}

impl Default for TubeConfig {
    fn default() -> Self {
        Self { theta: 0.97, growth: 0.25, min_radius: 1e-9 }
    }
}

/// One tube patch per constant-control piece of `traj`.
///
/// The radius profile is `ρ(t) = min_{s >= t} c(s) e^{-κ(s-t)}` with
/// `c(s) = min(ε/2, r(x(s)) - floor)` when a clearance cap `(S, floor)` is given.
/// It grows at rate at least `κ > L_f`, which makes the lateral boundary strictly
/// inward. The last piece is cut at `x(T)` by removing the forward half-ball of radius `ε`.
pub fn tube_around(
    sys: &ControlSystem,
    traj: &Trajectory,
    eps: f64,
    cap: Option<(&SetRep, f64)>,
    seed: usize,
    cfg: &TubeConfig,
) -> Result<Vec<Patch>> {
    let n = traj.states.len();
    if n < 2 || traj.controls.is_empty() {
        return Ok(Vec::new());
    }
    let horizon = traj.times[n - 1] - traj.times[0];
    let kappa = sys.lipschitz + cfg.growth / horizon.max(1e-12);
    let c: Vec<f64> = traj
        .states
        .iter()
        .map(|x| {
            let mut v = eps / 2.0;
            if let Some((s, floor)) = cap {
                v = v.min(s.clearance(x) - floor);
            }
            v
        })
        .collect();
    let mut rho = c.clone();
    for k in (0..n - 1).rev() {
        let dt = traj.times[k + 1] - traj.times[k];
        rho[k] = c[k].min(rho[k + 1] * (-kappa * dt).exp());
    }
    // split at control changes: piece j covers states a..=b
    let mut pieces: Vec<(usize, usize, usize)> = Vec::new();
    let mut a = 0;
    for k in 1..traj.controls.len() {
        if traj.controls[k] != traj.controls[k - 1] {
            pieces.push((a, k, traj.controls[a]));
            a = k;
        }
    }
    pieces.push((a, traj.controls.len(), traj.controls[a]));
    let np = pieces.len();
    let mut out = Vec::with_capacity(np);
    for (j, &(a, b, ctrl)) in pieces.iter().enumerate() {
        let scale = cfg.theta.powi((np - 1 - j) as i32);
        let radii: Vec<f64> = rho[a..=b].iter().map(|r| r * scale).collect();
        let rmin = radii.iter().copied().fold(f64::INFINITY, f64::min);
        if !(rmin > cfg.min_radius) {
            return Err(Error::TubeTooThin(rmin));
        }
        let exit = (j + 1 == np).then(|| {
            let end = traj.states[n - 1].clone();
            let v = sys.eval(&end, &sys.controls[ctrl]);
            ExitCap { center: end, direction: normalized(&v).unwrap_or(v), radius: eps }
        });
        out.push(Patch {
            domain: PatchDomain::TubeSegment { vertices: traj.states[a..=b].to_vec(), radii, exit },
            control: ctrl,
            control_value: sys.controls[ctrl].clone(),
            tag: PatchTag::Tube { seed, segment: j },
        });
    }
    Ok(out)
}
