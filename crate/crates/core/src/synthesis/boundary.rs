use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Patch, PatchDomain, PatchTag, PatchyFeedback};
use crate::constraint::crown_contains;
use crate::dynamics::ControlSystem;
use crate::geometry::{lower_wedge_boundary, wedge_certificate, CertificateConfig, RoundCone, SetRep, Wedge};
use crate::linalg::{add, axpy, dist, dot, norm, normalized, scale};
use crate::{Error, Point, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundaryConfig {
    /// Diameter cap `λ`: every boundary patch fits in a ball of radius `λ/2`.
    pub lambda: f64,
    /// Density of the arc-ordered boundary sample the cover walks along.
    pub n_boundary: usize,
    /// Samples of `x + ρB` when sizing the locality radius.
    pub rho_rings: usize,
    pub crown_samples: usize,
    pub max_patches: usize,
    pub certificate: CertificateConfig,
    pub seed: u64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            n_boundary: 4000,
            rho_rings: 16,
            crown_samples: 1000,
            max_patches: 20_000,
            certificate: CertificateConfig::default(),
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPatchParams {
    pub anchor: Point,
    pub control: usize,
    pub mu: f64,
    /// `w(x) = f(x, u_x)`.
    pub w: Point,
    pub eps_tilde: f64,
    pub rho: f64,
    pub beta: f64,
    pub big_r: f64,
    pub alpha: f64,
    pub lambda: f64,
    /// Sampled `max |f|` over `S × U`.
    pub m_speed: f64,
}

/// `u_x = argmin_u max_p f(x, u)·p` over unit normal generators `p`; `μ_x = -min`.
pub fn inward_control(sys: &ControlSystem, s: &SetRep, x: &[f64]) -> Result<(usize, f64)> {
    let cone = s.normal_cone(x)?;
    let mut best = (0, f64::INFINITY);
    for (i, u) in sys.controls.iter().enumerate() {
        let v = sys.eval(x, u);
        let worst = cone.generators.iter().map(|p| dot(&v, p)).fold(f64::NEG_INFINITY, f64::max);
        if worst < best.1 - 1e-12 {
            best = (i, worst);
        }
    }
    let mu = -best.1;
    if !(mu > 0.0) {
        return Err(Error::InwardViolated { point: x.to_vec(), margin: best.1 });
    }
    Ok((best.0, mu))
}

/// Inward control with the widest certified wedge at `x`.
///
/// Candidates keep at least half the best inward margin; ties in `ε` go to the larger margin.
/// Near corners a tilted velocity keeps `ε` bounded away from zero where the normal one cannot.
fn select_inward(sys: &ControlSystem, s: &SetRep, x: &[f64], cert: &CertificateConfig) -> Result<(usize, f64, f64)> {
    let (_, best_mu) = inward_control(sys, s, x)?;
    let cone = s.normal_cone(x)?;
    let mut cands: Vec<(usize, f64, Point)> = sys
        .controls
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let v = sys.eval(x, u);
            let mu = -cone.generators.iter().map(|p| dot(&v, p)).fold(f64::NEG_INFINITY, f64::max);
            (i, mu, v)
        })
        .filter(|c| c.1 >= 0.5 * best_mu)
        .collect();
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let grid = cert.eps_grid();
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, mu, v) in cands {
        // only grid values strictly above the current best can win
        let above = best.map_or(grid.len(), |b| grid.iter().take_while(|&&e| e > b.2).count());
        if above == 0 {
            break;
        }
        let cfg = CertificateConfig { levels: above, ..cert.clone() };
        if let Some((_, eps)) = wedge_certificate(s, x, &[v], &cfg) {
            best = Some((i, mu, eps));
        }
    }
    best.ok_or_else(|| Error::NotWedged(x.to_vec()))
}

/// Sampled `max |f|` over `S × U`.
pub(crate) fn max_speed(sys: &ControlSystem, s: &SetRep, seed: u64) -> f64 {
    let mut pts = s.sample_interior(400, seed);
    pts.extend(s.sample_boundary(128));
    sys.max_speed(&pts)
}

fn ball_rings(x: &[f64], r: f64, rings: usize) -> Vec<Point> {
    let mut out = vec![x.to_vec()];
    if x.len() == 2 {
        for i in 1..=rings {
            let rad = r * i as f64 / rings as f64;
            let per = (2 * rings).max(8);
            for k in 0..per {
                let th = 2.0 * PI * (k as f64 + 0.5 * (i % 2) as f64) / per as f64;
                out.push(vec![x[0] + rad * th.cos(), x[1] + rad * th.sin()]);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..rings * rings * 2 {
            let v: Point = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if let Some(u) = normalized(&v) {
                out.push(axpy(x, r * ((i % rings) + 1) as f64 / rings as f64, &u));
            }
        }
    }
    out
}

/// Largest sampled radius `<= cap` on which `f(ξ, u) + μ/2·B ⊂ T_{S_{r(ξ)}}(ξ)`
/// and `|f(ξ, u) - w| < ε̃/4` hold for every sample `ξ ∈ S`.
#[allow(clippy::too_many_arguments)]
fn locality_radius(sys: &ControlSystem, s: &SetRep, x: &[f64], u: &[f64], mu: f64, w: &[f64], eps: f64, cap: f64, rings: usize) -> f64 {
    let mut r = cap;
    for _ in 0..40 {
        let spacing = r / rings as f64;
        let mut fail = f64::INFINITY;
        for xi in ball_rings(x, r, rings) {
            if s.signed_distance(&xi) > 0.0 {
                continue;
            }
            let v = sys.eval(&xi, u);
            let ok = dist(&v, w) < eps / 4.0
                && s.level_normal_cone(&xi, 2.0 * spacing).map(|c| c.polar_contains(&v, mu / 2.0)).unwrap_or(false);
            if !ok {
                fail = fail.min(dist(&xi, x));
            }
        }
        if !fail.is_finite() {
            return r;
        }
        // near failures may be artefacts of the activity tolerance, which shrinks with r
        r = if fail > 2.0 * spacing { fail - spacing } else { r / 2.0 };
        if r <= 1e-9 {
            return 0.0;
        }
    }
    0.0
}

/// Boundary patch `Ω^x = Γ^x \ S_α` anchored at `x`.
pub fn boundary_patch(
    sys: &ControlSystem,
    s: &SetRep,
    x: &[f64],
    lambda: f64,
    m_speed: f64,
    cfg: &BoundaryConfig,
) -> Result<(Patch, BoundaryPatchParams)> {
    let (ui, mu, eps) = select_inward(sys, s, x, &cfg.certificate)?;
    let u = sys.controls[ui].clone();
    let w = sys.eval(x, &u);
    let wn = norm(&w);
    let rho = locality_radius(sys, s, x, &u, mu, &w, eps, lambda / 2.0, cfg.rho_rings);
    if rho <= 0.0 {
        return Err(Error::Precondition(format!("no locality radius at {x:?}")));
    }
    let m = m_speed.max(wn);
    let beta = 0.5 * (1.0f64).min(2.0 * rho / (2.0 * m * eps + eps * eps));
    // β-rescaled half-radius wedge at x, and the depth of its far cap inside S
    let half = Wedge::new(w.clone(), eps / 2.0, x.to_vec());
    let big_r = lower_wedge_boundary(&half, 64)
        .iter()
        .map(|p| {
            let z = axpy(x, beta, &crate::linalg::sub(p, x));
            -s.signed_distance(&z)
        })
        .fold(f64::INFINITY, f64::min);
    if !(big_r > 0.0) {
        return Err(Error::NotWedged(x.to_vec()));
    }
    let axis_len = beta * (eps / 2.0) * wn;
    let alpha = 0.5 * (rho / 2.0).min(big_r / 2.0).min(beta / 2.0).min(axis_len);
    let what = scale(&w, 1.0 / wn);
    let apex = axpy(x, -alpha, &what);
    let tip = axpy(&apex, beta * eps / 2.0, &w);
    let cone = RoundCone::new(apex, tip, 0.0, beta * eps * eps / 4.0);
    let params = BoundaryPatchParams {
        anchor: x.to_vec(),
        control: ui,
        mu,
        w,
        eps_tilde: eps,
        rho,
        beta,
        big_r,
        alpha,
        lambda,
        m_speed: m,
    };
    let patch = Patch {
        domain: PatchDomain::ShiftedWedge { cone, alpha },
        control: ui,
        control_value: u,
        tag: PatchTag::Boundary { anchor: x.to_vec() },
    };
    Ok((patch, params))
}

/// Boundary layer `U_o` with its crown depth `r̃` and uniform margin `μ`.
#[derive(Clone, Debug)]
pub struct BoundaryFeedback {
    /// Patches sorted by `(α_i, i)`.
    pub patches: Vec<Patch>,
    pub params: Vec<BoundaryPatchParams>,
    pub r_tilde: f64,
    pub mu: f64,
}

impl BoundaryFeedback {
    pub fn as_feedback(&self, sys: &ControlSystem, s: &SetRep) -> PatchyFeedback {
        PatchyFeedback::new(sys.name.clone(), s.clone(), self.patches.clone(), None)
    }
}

/// Unit outward direction at a boundary point (average of normal-cone generators).
pub(crate) fn outward(s: &SetRep, q: &[f64]) -> Option<Point> {
    let cone = s.normal_cone_with(q, 1e-9).ok()?;
    let sum = cone.generators.iter().fold(vec![0.0; q.len()], |a, p| add(&a, p));
    normalized(&sum)
}

/// Seeded points of the crown `Q(S, r)`: a boundary point pushed inward by a uniform depth.
pub fn crown_samples(s: &SetRep, r: f64, n: usize, seed: u64) -> Vec<Point> {
    let bd = s.sample_boundary(2048);
    let normals: Vec<Option<Point>> = bd.iter().map(|q| outward(s, q)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n && tries < 100 * n {
        tries += 1;
        let k = rng.gen_range(0..bd.len());
        let Some(nv) = &normals[k] else { continue };
        // jitter along the boundary between neighbouring samples
        let j = (k + 1) % bd.len();
        let t: f64 = rng.gen();
        let q: Point = bd[k].iter().zip(&bd[j]).map(|(a, b)| a + t * (b - a)).collect();
        let q = s.project_onto(&q);
        let depth = r * rng.gen::<f64>();
        let z = axpy(&q, -depth, nv);
        if crown_contains(s, r, &z) {
            out.push(z);
        }
    }
    out
}

/// Greedy cover of a boundary sample; used outside the plane.
fn sample_cover(sys: &ControlSystem, s: &SetRep, cfg: &BoundaryConfig, m_speed: f64) -> Result<Cover> {
    let samples = s.sample_boundary(cfg.n_boundary);
    let m = samples.len();
    let spacing = s.diameter() * PI / m as f64;
    let margin = spacing / 2.0;
    let mut patches: Vec<Patch> = Vec::new();
    let mut params: Vec<BoundaryPatchParams> = Vec::new();
    let mut covered = vec![false; m];
    let mut step = 4usize;
    let mut first = 0usize;
    loop {
        while first < m && covered[first] {
            first += 1;
        }
        if first >= m {
            break;
        }
        if patches.len() >= cfg.max_patches {
            let gaps = (0..m).filter(|&i| !covered[i]).take(20).map(|i| samples[i].clone()).collect();
            return Err(Error::CoverIncomplete(gaps));
        }
        let target = &samples[first];
        let mut chosen = None;
        let mut offsets = vec![2 * step, step, step / 2, step / 4, 0];
        offsets.dedup();
        for off in offsets {
            let k = (first + off) % m;
            let Ok((patch, par)) = boundary_patch(sys, s, &samples[k], cfg.lambda, m_speed, cfg) else { continue };
            if patch.domain.depth(s, target) > margin || off == 0 {
                chosen = Some((patch, par, off));
                break;
            }
        }
        let Some((patch, par, off)) = chosen else {
            return Err(Error::CoverIncomplete(vec![target.clone()]));
        };
        step = off.max(1);
        let mut hit = false;
        for i in 0..m {
            if !covered[i] && patch.domain.depth(s, &samples[i]) > margin {
                covered[i] = true;
                hit = true;
            }
        }
        if !hit {
            // anchor too thin for the sampling margin; accept it to make progress
            covered[first] = true;
        }
        patches.push(patch);
        params.push(par);
    }
    Ok((patches, params))
}

type Cover = (Vec<Patch>, Vec<BoundaryPatchParams>);

/// Closed arc-length parametrisation of a planar boundary.
struct Loop<'a> {
    s: &'a SetRep,
    pts: Vec<Point>,
    cum: Vec<f64>,
}

impl<'a> Loop<'a> {
    fn new(s: &'a SetRep, n: usize) -> Self {
        let pts = s.sample_boundary(n);
        let mut cum = vec![0.0];
        for i in 0..pts.len() {
            let j = (i + 1) % pts.len();
            cum.push(cum[i] + dist(&pts[i], &pts[j]));
        }
        Self { s, pts, cum }
    }

    fn total(&self) -> f64 {
        self.cum[self.pts.len()]
    }

    fn at(&self, t: f64) -> Point {
        let m = self.pts.len();
        let t = t.rem_euclid(self.total());
        let i = (self.cum.partition_point(|&c| c <= t).max(1) - 1).min(m - 1);
        let len = self.cum[i + 1] - self.cum[i];
        let f = if len > 0.0 { (t - self.cum[i]) / len } else { 0.0 };
        let q: Point = self.pts[i].iter().zip(&self.pts[(i + 1) % m]).map(|(a, b)| a + f * (b - a)).collect();
        // chords of curved boundaries cut inside; push back out
        if self.s.signed_distance(&q) < 0.0 {
            self.s.project_to_complement_closure(&q).map(|(p, _)| p).unwrap_or(q)
        } else {
            self.s.project_onto(&q)
        }
    }
}

/// Walks `∂S` by arc length; each patch is anchored as far ahead as still covers the walk
/// position, and the walk jumps to where that patch stops covering.
fn march_cover(sys: &ControlSystem, s: &SetRep, cfg: &BoundaryConfig, m_speed: f64) -> Result<Cover> {
    let lp = Loop::new(s, cfg.n_boundary);
    let total = lp.total();
    let floor = total * 1e-9;
    let mut patches: Vec<Patch> = Vec::new();
    let mut params: Vec<BoundaryPatchParams> = Vec::new();
    let mut t = 0.0;
    let mut h = total / cfg.n_boundary as f64;
    while t < total {
        if patches.len() >= cfg.max_patches {
            return Err(Error::CoverIncomplete(vec![lp.at(t)]));
        }
        let here = lp.at(t);
        let mut chosen = None;
        for k in [2.0 * h, h, h / 2.0, h / 4.0, 0.0] {
            let Ok((patch, par)) = boundary_patch(sys, s, &lp.at(t + k), cfg.lambda, m_speed, cfg) else { continue };
            let margin = cover_margin(s, &patch, &par);
            if patch.domain.depth(s, &here) > margin {
                chosen = Some((patch, par, margin));
                break;
            }
        }
        let Some((patch, par, margin)) = chosen else {
            return Err(Error::CoverIncomplete(vec![here]));
        };
        let covered = |u: f64| patch.domain.depth(s, &lp.at(u)) > margin;
        // expand then bisect to the end of the covered arc
        let mut lo = t;
        let mut step = (h / 8.0).max(floor);
        while covered(lo + step) && lo + step < t + total {
            lo += step;
            step *= 2.0;
        }
        let mut hi = lo + step;
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if covered(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        h = (lo - t).max(floor);
        t = lo.max(t + floor);
        patches.push(patch);
        params.push(par);
    }
    Ok((patches, params))
}

/// Depth a walk point needs inside a patch to count as covered.
fn cover_margin(s: &SetRep, patch: &Patch, par: &BoundaryPatchParams) -> f64 {
    0.05 * patch.domain.depth(s, &par.anchor).max(0.0)
}

/// Cover of `∂S` by boundary patches, ordered by `(α_i, i)`.
pub fn boundary_feedback(sys: &ControlSystem, s: &SetRep, cfg: &BoundaryConfig) -> Result<BoundaryFeedback> {
    let m_speed = max_speed(sys, s, cfg.seed);
    let (patches, params) = if s.dim() == 2 { march_cover(sys, s, cfg, m_speed)? } else { sample_cover(sys, s, cfg, m_speed)? };
    let mut order: Vec<usize> = (0..patches.len()).collect();
    order.sort_by(|&a, &b| params[a].alpha.total_cmp(&params[b].alpha).then(a.cmp(&b)));
    let patches: Vec<Patch> = order.iter().map(|&i| patches[i].clone()).collect();
    let params: Vec<BoundaryPatchParams> = order.iter().map(|&i| params[i].clone()).collect();
    let mu = params.iter().map(|p| p.mu).fold(f64::INFINITY, f64::min) / 2.0;

    let fb = PatchyFeedback::new(sys.name.clone(), s.clone(), patches.clone(), None);
    let alpha_max = params.iter().map(|p| p.alpha).fold(0.0, f64::max);
    let mut r_tilde = 0.0;
    let mut r = alpha_max;
    while r > 1e-7 * s.diameter() {
        let pts = crown_samples(s, r, cfg.crown_samples, cfg.seed);
        if pts.iter().all(|z| fb.top_patch(z).is_some()) {
            r_tilde = r;
            break;
        }
        r *= 0.85;
    }
    if r_tilde <= 0.0 {
        return Err(Error::CoverIncomplete(Vec::new()));
    }
    Ok(BoundaryFeedback { patches, params, r_tilde, mu })
}
