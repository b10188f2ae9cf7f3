use serde::{Deserialize, Serialize};

use std::f64::consts::PI;

use super::boundary::outward;
use super::{boundary_feedback, tube_around, BoundaryConfig, BoundaryFeedback, Exclusion, Patch, PatchyFeedback, TubeConfig};
use crate::dynamics::{integrate_open_loop, ControlSystem, OpenLoopControl};
use crate::geometry::SetRep;
use crate::linalg::{axpy, normalized, sub};
use crate::planner::{plan_constrained, PlanRequest};
use crate::{Error, Point, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub delta: f64,
    pub gamma: f64,
    pub boundary: BoundaryConfig,
    pub tube: TubeConfig,
    /// Tube radius parameter `ε` as a multiple of `γ`; the exit half-ball must stay in `Σ^{3γ}`.
    pub tube_eps_factor: f64,
    pub dwell: f64,
    pub plan_horizon: f64,
    pub node_budget: usize,
    /// RK4 substeps per dwell interval when building tube polylines.
    pub tube_substeps: usize,
    /// Spacing of the coverage grid over `S \ Σ^δ`.
    pub coverage_h: f64,
    /// Depth a grid sample must have inside some patch to count as covered while seeding.
    pub coverage_margin: f64,
    pub max_seeds: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            delta: 0.2,
            gamma: 0.05,
            boundary: BoundaryConfig::default(),
            tube: TubeConfig::default(),
            tube_eps_factor: 2.0,
            dwell: 0.1,
            plan_horizon: 6.0,
            node_budget: 200_000,
            tube_substeps: 4,
            coverage_h: 0.025,
            coverage_margin: 0.006,
            max_seeds: 4000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblyParams {
    pub delta: f64,
    pub gamma: f64,
    pub r_tilde: f64,
    pub mu: f64,
}

/// Tube patches around one planned trajectory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TubeFamily {
    pub seed: Point,
    pub plan: OpenLoopControl,
    pub times: Vec<f64>,
    pub states: Vec<Point>,
    pub eps: f64,
    pub rho_xi: f64,
    pub patches: Vec<Patch>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub boundary_patches: usize,
    pub tube_families: usize,
    pub total_patches: usize,
    pub r_tilde: f64,
    pub mu: f64,
    pub coverage_samples: usize,
    pub covered_samples: usize,
    pub seeds_tried: usize,
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub feedback: PatchyFeedback,
    pub boundary: BoundaryFeedback,
    pub tubes: Vec<TubeFamily>,
    pub params: AssemblyParams,
    pub report: SynthesisReport,
}

/// Cell-centred grid over `S \ Σ^δ`.
pub fn coverage_grid(s: &SetRep, target: &SetRep, delta: f64, h: f64) -> Vec<Point> {
    let (lo, hi) = s.bounding_box();
    let d = lo.len();
    let counts: Vec<usize> = (0..d).map(|k| ((hi[k] - lo[k]) / h).ceil().max(1.0) as usize).collect();
    let total: usize = counts.iter().product();
    let mut out = Vec::new();
    for mut idx in 0..total {
        let p: Point = (0..d)
            .map(|k| {
                let i = idx % counts[k];
                idx /= counts[k];
                lo[k] + (i as f64 + 0.5) * (hi[k] - lo[k]) / counts[k] as f64
            })
            .collect();
        if s.contains(&p) && target.distance(&p) > delta {
            out.push(p);
        }
    }
    out
}

/// Layers just inside `S_r̃`, where the boundary layer stops and tubes must take over.
/// Layer depths grow geometrically from `1.05·r̃` up to `r̃ + width`; lateral spacing is half
/// the layer depth, which matches how wide a tube seeded there can be.
pub fn band_samples(s: &SetRep, target: &SetRep, delta: f64, r_tilde: f64, width: f64) -> Vec<Point> {
    let mut out = Vec::new();
    let mut c = 1.05 * r_tilde;
    while c <= r_tilde + width {
        let n = ((PI * s.diameter() / (0.5 * c)).ceil() as usize).max(8);
        for q in s.sample_boundary(n) {
            let Some(nv) = outward(s, &q) else { continue };
            let z = axpy(&q, -c, &nv);
            if s.contains(&z) && target.distance(&z) > delta {
                out.push(z);
            }
        }
        c *= 1.5;
    }
    out
}

/// Samples outside `D`.
pub fn coverage_gaps(fb: &PatchyFeedback, samples: &[Point]) -> Vec<Point> {
    samples.iter().filter(|p| super::alpha_star(fb, p).is_none()).cloned().collect()
}

/// Boundary patches first, then each tube family in seed order; `D` excludes `Σ^{3γ}`.
///
/// Fails with the uncovered points when some sample of `S \ Σ^δ` is outside `D`.
pub fn assemble_feedback(
    sys: &ControlSystem,
    s: &SetRep,
    boundary: &[Patch],
    tubes: &[TubeFamily],
    target: &SetRep,
    gamma: f64,
    samples: &[Point],
) -> Result<PatchyFeedback> {
    let mut patches = boundary.to_vec();
    for t in tubes {
        patches.extend(t.patches.iter().cloned());
    }
    let fb = PatchyFeedback::new(
        sys.name.clone(),
        s.clone(),
        patches,
        Some(Exclusion { target: target.clone(), radius: 3.0 * gamma }),
    );
    let gaps = coverage_gaps(&fb, samples);
    if gaps.is_empty() {
        Ok(fb)
    } else {
        Err(Error::CoverageIncomplete(gaps))
    }
}

/// Moves `p` inward along the nearest-boundary direction until its clearance is `depth`.
fn push_inward(s: &SetRep, p: &[f64], depth: f64) -> Point {
    let r = s.clearance(p);
    if r >= depth {
        return p.to_vec();
    }
    let Ok((q, _)) = s.project_to_complement_closure(p) else { return p.to_vec() };
    let Some(dir) = normalized(&sub(p, &q)) else { return p.to_vec() };
    let xi = axpy(&q, depth, &dir);
    if s.clearance(&xi) > r {
        xi
    } else {
        p.to_vec()
    }
}

fn build_family(
    sys: &ControlSystem,
    s: &SetRep,
    target: &SetRep,
    xi: &[f64],
    r_tilde: f64,
    cfg: &SynthesisConfig,
    index: usize,
) -> Result<Option<TubeFamily>> {
    let rho_xi = r_tilde.min(s.clearance(xi));
    if rho_xi <= 0.0 {
        return Ok(None);
    }
    let mut req = PlanRequest::new(xi.to_vec(), rho_xi / 2.0, target.clone(), cfg.gamma, cfg.dwell, cfg.plan_horizon);
    req.node_budget = cfg.node_budget;
    let Some(plan) = plan_constrained(sys, s, &req)? else { return Ok(None) };
    if plan.is_empty() {
        return Ok(None);
    }
    let plan = plan.merged();
    let traj = integrate_open_loop(sys, xi, &plan, cfg.dwell / cfg.tube_substeps as f64)?;
    let eps = cfg.tube_eps_factor * cfg.gamma;
    let patches = tube_around(sys, &traj, eps, Some((s, rho_xi / 4.0)), index, &cfg.tube)?;
    Ok(Some(TubeFamily {
        seed: xi.to_vec(),
        plan,
        times: traj.times,
        states: traj.states,
        eps,
        rho_xi,
        patches,
    }))
}

fn in_box(b: &(Point, Point), p: &[f64]) -> bool {
    p.iter().enumerate().all(|(j, v)| *v >= b.0[j] && *v <= b.1[j])
}

fn covered_by(patches: &[Patch], s: &SetRep, p: &[f64], margin: f64) -> bool {
    patches.iter().any(|q| in_box(&q.domain.bounding_box(), p) && q.domain.depth(s, p) > margin)
}

fn family_box(fam: &TubeFamily) -> (Point, Point) {
    let boxes: Vec<(Point, Point)> = fam.patches.iter().map(|p| p.domain.bounding_box()).collect();
    let d = boxes.first().map_or(0, |b| b.0.len());
    let lo = (0..d).map(|j| boxes.iter().map(|b| b.0[j]).fold(f64::INFINITY, f64::min)).collect();
    let hi = (0..d).map(|j| boxes.iter().map(|b| b.1[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
    (lo, hi)
}

/// Boundary layer, seeded tubes and assembly.
pub fn synthesize(sys: &ControlSystem, s: &SetRep, target: &SetRep, cfg: &SynthesisConfig) -> Result<Synthesis> {
    if 4.0 * cfg.gamma > cfg.delta * (1.0 + 1e-12) {
        return Err(Error::Precondition("need 4γ <= δ".into()));
    }
    let boundary = boundary_feedback(sys, s, &cfg.boundary)?;
    let r_tilde = boundary.r_tilde;
    let mut samples = coverage_grid(s, target, cfg.delta, cfg.coverage_h);
    samples.extend(band_samples(s, target, cfg.delta, r_tilde, cfg.coverage_h + cfg.coverage_margin));
    // required depth fades out towards the crown, which the boundary layer covers
    let need = |p: &[f64]| cfg.coverage_margin.min((s.clearance(p) - r_tilde).max(0.0));
    let layer = boundary.as_feedback(sys, s);
    let mut uncovered: Vec<usize> = (0..samples.len()).filter(|&i| layer.max_depth(&samples[i]) <= need(&samples[i])).collect();
    // farthest from the target first; index breaks ties
    uncovered.sort_by(|&a, &b| {
        target.distance(&samples[b]).total_cmp(&target.distance(&samples[a])).then(a.cmp(&b))
    });
    let mut tubes: Vec<TubeFamily> = Vec::new();
    let mut unreachable = Vec::new();
    let mut tried = 0;
    let depth_goal = cfg.tube_eps_factor * cfg.gamma / 2.0 + r_tilde / 4.0;
    while let Some(&i) = uncovered.first() {
        if tried >= cfg.max_seeds {
            break;
        }
        let p = samples[i].clone();
        let mut made = false;
        for xi in [push_inward(s, &p, depth_goal), p.clone()] {
            tried += 1;
            let bf = build_family(sys, s, target, &xi, r_tilde, cfg, tubes.len())?;
            match bf {
                Some(fam) => {
                    let hit = covered_by(&fam.patches, s, &p, need(&p));
                    let bx = family_box(&fam);
                    uncovered.retain(|&j| {
                        let q = &samples[j];
                        let c = in_box(&bx, q) && covered_by(&fam.patches, s, q, need(q));
                        !c
                    });
                    tubes.push(fam);
                    made = true;
                    if hit {
                        break;
                    }
                }
                None => continue,
            }
        }
        if !made {
            unreachable.push(p);
        }
        // never revisit this sample as a seed
        uncovered.retain(|&j| j != i);
    }
    if !unreachable.is_empty() {
        return Err(Error::Unreachable(unreachable));
    }
    let feedback = assemble_feedback(sys, s, &boundary.patches, &tubes, target, cfg.gamma, &samples)?;
    let covered = samples.len() - coverage_gaps(&feedback, &samples).len();
    let report = SynthesisReport {
        boundary_patches: boundary.patches.len(),
        tube_families: tubes.len(),
        total_patches: feedback.len(),
        r_tilde,
        mu: boundary.mu,
        coverage_samples: samples.len(),
        covered_samples: covered,
        seeds_tried: tried,
    };
    let params = AssemblyParams { delta: cfg.delta, gamma: cfg.gamma, r_tilde, mu: boundary.mu };
    Ok(Synthesis { feedback, boundary, tubes, params, report })
}
