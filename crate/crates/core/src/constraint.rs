//! Sampled certificates for the standing hypotheses on the constraint set:
//! every boundary point is wedged, and some admissible velocity points strictly
//! inward there. Also the inner-approximation ladder and crown membership.

use serde::{Deserialize, Serialize};

use crate::dynamics::ControlSystem;
use crate::geometry::{wedge_certificate, CertificateConfig, SetRep, TOL_BD};
use crate::linalg::{add, dot, normalized, scale};
use crate::{Error, Point, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Point,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub s1_ok: bool,
    pub s2_ok: bool,
    pub s2_margin: f64,
    pub r_o: f64,
    pub n_boundary: usize,
    pub witness_failures: Vec<Witness>,
}

/// Pointed normal cone and a wedge certificate at each sampled boundary point.
pub fn check_s1(rep: &SetRep, n_boundary: usize, cfg: &CertificateConfig) -> (bool, Vec<Witness>) {
    let mut witnesses = Vec::new();
    for x in rep.sample_boundary(n_boundary) {
        let cone = match rep.normal_cone(&x) {
            Ok(c) => c,
            Err(e) => {
                witnesses.push(Witness { point: x, reason: e.to_string() });
                continue;
            }
        };
        if cone.generators.is_empty() || !cone.is_pointed() {
            witnesses.push(Witness { point: x, reason: "normal cone not pointed".into() });
            continue;
        }
        let mut cands: Vec<Point> = Vec::new();
        let sum = cone.generators.iter().fold(vec![0.0; x.len()], |acc, p| add(&acc, p));
        if let Some(avg) = normalized(&sum) {
            cands.push(scale(&avg, -1.0));
        }
        cands.extend(cone.generators.iter().map(|p| scale(p, -1.0)));
        if wedge_certificate(rep, &x, &cands, cfg).is_none() {
            witnesses.push(Witness { point: x, reason: "no wedge certificate".into() });
        }
    }
    (witnesses.is_empty(), witnesses)
}

/// `max_x max_p min_u f(x, u)·p` over sampled boundary points and unit normals
/// (generators and pairwise midpoints). Negative certifies strict inwardness.
pub fn check_s2(sys: &ControlSystem, rep: &SetRep, n_boundary: usize) -> f64 {
    check_s2_worst(sys, rep, n_boundary).0
}

/// [`check_s2`] plus the boundary point and normal attaining the margin.
pub fn check_s2_worst(sys: &ControlSystem, rep: &SetRep, n_boundary: usize) -> (f64, Option<Witness>) {
    let mut margin = f64::NEG_INFINITY;
    let mut worst = None;
    for x in rep.sample_boundary(n_boundary) {
        let Ok(cone) = rep.normal_cone(&x) else { continue };
        let g = &cone.generators;
        let mut normals: Vec<Point> = g.clone();
        for i in 0..g.len() {
            for j in i + 1..g.len() {
                if let Some(m) = normalized(&add(&g[i], &g[j])) {
                    normals.push(m);
                }
            }
        }
        let vels: Vec<Point> = sys.controls.iter().map(|u| sys.eval(&x, u)).collect();
        for p in &normals {
            let best = vels.iter().map(|v| dot(v, p)).fold(f64::INFINITY, f64::min);
            if best > margin {
                margin = best;
                worst = Some(Witness { point: x.clone(), reason: format!("face normal {p:?}: best inward margin {best}") });
            }
        }
    }
    (margin, worst)
}

/// `32` geometric steps from `diam/2` down to `diam/1000`, ascending.
pub fn default_r_grid(rep: &SetRep) -> Vec<f64> {
    r_grid(rep, 32)
}

/// `n` geometric steps from `diam/2` down to `diam/1000`, ascending.
pub fn r_grid(rep: &SetRep, n: usize) -> Vec<f64> {
    let d = rep.diameter();
    let (hi, lo) = (d / 2.0, d / 1000.0);
    if n <= 1 {
        return vec![lo];
    }
    let ratio = (lo / hi).powf(1.0 / (n - 1) as f64);
    let mut g: Vec<f64> = (0..n).map(|k| hi * ratio.powi(k as i32)).collect();
    g.reverse();
    g
}

/// Largest grid `r` such that every grid erosion up to `r` is nonempty and passes [`check_s1`].
pub fn find_r_o(rep: &SetRep, r_grid: &[f64], n_boundary: usize, cfg: &CertificateConfig) -> Result<f64> {
    let mut grid = r_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut best = None;
    for &r in &grid {
        let ok = match rep.inner_approximation(r) {
            Ok(inner) => check_s1(&inner, n_boundary, cfg).0,
            Err(_) => false,
        };
        if !ok {
            break;
        }
        best = Some(r);
    }
    best.ok_or_else(|| Error::NotUniformlyWedged(grid.first().copied().unwrap_or(0.0)))
}

/// `x ∈ Q(S, r) = S \ int(S_r)`.
pub fn crown_contains(rep: &SetRep, r: f64, x: &[f64]) -> bool {
    let sd = rep.signed_distance(x);
    sd <= 0.0 && -sd <= r + TOL_BD
}

/// Runs both checks and the `r_o` search over [`default_r_grid`].
pub fn check_hypotheses(sys: &ControlSystem, rep: &SetRep, n_boundary: usize, cfg: &CertificateConfig) -> HypothesisReport {
    check_hypotheses_on(sys, rep, n_boundary, cfg, &default_r_grid(rep))
}

pub fn check_hypotheses_on(
    sys: &ControlSystem,
    rep: &SetRep,
    n_boundary: usize,
    cfg: &CertificateConfig,
    grid: &[f64],
) -> HypothesisReport {
    let (s1_ok, mut witness_failures) = check_s1(rep, n_boundary, cfg);
    let (s2_margin, s2_worst) = check_s2_worst(sys, rep, n_boundary);
    if s2_margin >= 0.0 {
        witness_failures.extend(s2_worst);
    }
    let r_o = if s1_ok {
        match find_r_o(rep, grid, n_boundary, cfg) {
            Ok(r) => r,
            Err(e) => {
                witness_failures.push(Witness { point: Vec::new(), reason: e.to_string() });
                0.0
            }
        }
    } else {
        0.0
    };
    HypothesisReport {
        s1_ok: s1_ok && r_o > 0.0,
        s2_ok: s2_margin < 0.0,
        s2_margin,
        r_o,
        n_boundary,
        witness_failures,
    }
}
