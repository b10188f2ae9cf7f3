use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::set::random_unit;
use super::{RoundCone, SetRep, TOL_BD};
use crate::linalg::{add, axpy, dot, norm, normalized, scale, sub};
use crate::Point;

/// `y + {s·w : w ∈ v + εB, s ∈ [0, ε]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wedge {
    pub axis: Point,
    pub eps: f64,
    pub base: Point,
}

impl Wedge {
    pub fn new(axis: Point, eps: f64, base: Point) -> Self {
        Self { axis, eps, base }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        wedge_contains(self, p)
    }

    /// Same set as a round cone from the apex to `y + εv`.
    pub fn as_round_cone(&self) -> RoundCone {
        RoundCone::new(
            self.base.clone(),
            axpy(&self.base, self.eps, &self.axis),
            0.0,
            self.eps * self.eps,
        )
    }

    pub fn outer_radius(&self) -> f64 {
        self.eps * (norm(&self.axis) + self.eps)
    }
}

pub fn wedge_contains(w: &Wedge, p: &[f64]) -> bool {
    let q = sub(p, &w.base);
    let qq = dot(&q, &q);
    if qq == 0.0 {
        return true;
    }
    // minimize |t q - v| over t = 1/s >= 1/ε
    let t = (dot(&q, &w.axis) / qq).max(1.0 / w.eps);
    norm(&sub(&scale(&q, t), &w.axis)) <= w.eps * (1.0 + 1e-12) + 1e-15
}

/// `n` points of `y + ε(v + ε e)` with `e` a unit vector and `e·v >= 0`.
pub fn lower_wedge_boundary(w: &Wedge, n: usize) -> Vec<Point> {
    let d = w.axis.len();
    let Some(vh) = normalized(&w.axis) else { return vec![w.base.clone(); n] };
    let point = |e: &[f64]| axpy(&w.base, w.eps, &axpy(&w.axis, w.eps, e));
    if d == 1 {
        return vec![point(&vh); n];
    }
    if d == 2 {
        let perp = [-vh[1], vh[0]];
        return (0..n)
            .map(|k| {
                let phi = -PI / 2.0 + PI * (k as f64 + 0.5) / n as f64;
                let e: Point = (0..2).map(|i| phi.cos() * vh[i] + phi.sin() * perp[i]).collect();
                point(&e)
            })
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x1ab);
    let mut out = vec![point(&vh)];
    while out.len() < n {
        let mut e = random_unit(&mut rng, d);
        if dot(&e, &vh) < 0.0 {
            e = axpy(&e, -2.0 * dot(&e, &vh), &vh);
        }
        out.push(point(&e));
    }
    out
}

/// Sampling densities and the dyadic ε grid for [`wedge_certificate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertificateConfig {
    pub n_y: usize,
    pub n_w: usize,
    pub n_s: usize,
    pub eps_max: f64,
    pub levels: usize,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        Self { n_y: 64, n_w: 32, n_s: 16, eps_max: 1.0, levels: 12 }
    }
}

impl CertificateConfig {
    pub fn eps_grid(&self) -> Vec<f64> {
        (0..self.levels).map(|k| self.eps_max * 0.5f64.powi(k as i32)).collect()
    }
}

/// Deterministic sample of the closed ball `c + rB`, center included.
fn ball_sample(c: &[f64], r: f64, n: usize, seed: u64) -> Vec<Point> {
    let d = c.len();
    let mut out = vec![c.to_vec()];
    if d == 2 {
        let rings = ((n as f64 / 8.0).sqrt().ceil() as usize).max(1);
        let per = ((n.saturating_sub(1)) / rings).max(4);
        for i in 0..rings {
            let rad = r * (rings - i) as f64 / rings as f64;
            for k in 0..per {
                let th = 2.0 * PI * k as f64 / per as f64 + 0.37 * i as f64;
                out.push(vec![c[0] + rad * th.cos(), c[1] + rad * th.sin()]);
            }
        }
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut i = 0usize;
    while out.len() < n {
        let frac = if i.is_multiple_of(2) { 1.0 } else { 0.5 };
        out.push(axpy(c, r * frac, &random_unit(&mut rng, d)));
        i += 1;
    }
    for k in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[k] = s * r;
            out.push(add(c, &e));
        }
    }
    out
}

fn verifies(rep: &SetRep, x: &[f64], v: &[f64], eps: f64, cfg: &CertificateConfig) -> bool {
    let ys: Vec<Point> = ball_sample(x, eps, cfg.n_y, 11)
        .into_iter()
        .map(|y| rep.project_onto(&y))
        .filter(|y| crate::linalg::dist(y, x) <= eps * (1.0 + 1e-9) + TOL_BD)
        .collect();
    let ws = ball_sample(v, eps, cfg.n_w, 13);
    for y in &ys {
        for w in &ws {
            for j in 1..=cfg.n_s {
                let s = eps * j as f64 / cfg.n_s as f64;
                if rep.signed_distance(&axpy(y, s, w)) > 1e-9 {
                    return false;
                }
            }
        }
    }
    true
}

/// First candidate axis and largest grid `ε` with `y + W(v, ε) ⊂ S` for sampled
/// `y ∈ (x + εB) ∩ S`. `None` if nothing verifies at the smallest grid value.
pub fn wedge_certificate(
    rep: &SetRep,
    x: &[f64],
    candidates: &[Point],
    cfg: &CertificateConfig,
) -> Option<(Point, f64)> {
    if rep.signed_distance(x).abs() > TOL_BD {
        return None;
    }
    let grid = cfg.eps_grid();
    for v in candidates {
        if norm(v) < 1e-14 {
            continue;
        }
        for &eps in &grid {
            if verifies(rep, x, v, eps, cfg) {
                return Some((v.clone(), eps));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w() -> Wedge {
        Wedge::new(vec![1.0, 0.0], 0.5, vec![0.0, 0.0])
    }

    #[test]
    fn membership_examples() {
        assert!(wedge_contains(&w(), &[0.5, 0.0]));
        assert!(wedge_contains(&w(), &[0.0, 0.0]));
        assert!(!wedge_contains(&w(), &[-0.1, 0.0]));
        assert!(!wedge_contains(&w(), &[0.8, 0.0]));
    }

    #[test]
    fn lower_boundary_examples() {
        let one = lower_wedge_boundary(&w(), 1);
        assert!((one[0][0] - 0.75).abs() < 1e-12 && one[0][1].abs() < 1e-12);
        let five = lower_wedge_boundary(&w(), 5);
        assert_eq!(five.len(), 5);
        for i in 0..5 {
            assert!(wedge_contains(&w(), &five[i]));
            for j in 0..i {
                assert!(crate::linalg::dist(&five[i], &five[j]) > 1e-6);
            }
        }
    }

    #[test]
    fn membership_matches_definition() {
        // the union-of-balls form agrees away from the boundary
        let wd = Wedge::new(vec![0.6, 0.8], 0.4, vec![0.1, -0.2]);
        let rc = wd.as_round_cone();
        for i in 0..40 {
            for j in 0..40 {
                let p = [-0.3 + 0.02 * i as f64, -0.4 + 0.02 * j as f64];
                let sd = rc.sdf(&p);
                if sd.abs() > 1e-9 {
                    assert_eq!(wedge_contains(&wd, &p), sd < 0.0, "{p:?}");
                }
            }
        }
    }

    #[test]
    fn certificate_examples() {
        let s = SetRep::square(1.0);
        let cfg = CertificateConfig::default();
        let (v, e) = wedge_certificate(&s, &[1.0, 0.0], &[vec![-1.0, 0.0]], &cfg).unwrap();
        assert_eq!(v, vec![-1.0, 0.0]);
        assert_eq!(e, 0.5);
        let h = 0.5f64.sqrt();
        assert!(wedge_certificate(&s, &[1.0, 1.0], &[vec![-h, -h]], &cfg).is_some());
        assert!(wedge_certificate(&s, &[1.0, 0.0], &[vec![1.0, 0.0]], &cfg).is_none());
    }
}
