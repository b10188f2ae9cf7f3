use serde::{Deserialize, Serialize};

use crate::geometry::{cone_sdf, RoundCone, SetRep};
use crate::linalg::{dist, dot, normalized, sub};
use crate::Point;

/// Removes the closed half-ball `{η ∈ c + rB : (η - c)·v >= 0}` from a tube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitCap {
    pub center: Point,
    pub direction: Point,
    pub radius: f64,
}

impl ExitCap {
    fn contains(&self, p: &[f64]) -> bool {
        let q = sub(p, &self.center);
        dot(&q, &q) <= self.radius * self.radius && dot(&q, &self.direction) >= 0.0
    }
}

/// Open patch domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatchDomain {
    /// Shifted, rescaled wedge with the points of `S_α` removed.
    ShiftedWedge { cone: RoundCone, alpha: f64 },
    /// Tube around a polyline with per-vertex radii.
    TubeSegment { vertices: Vec<Point>, radii: Vec<f64>, exit: Option<ExitCap> },
    Ball { center: Point, radius: f64 },
}

impl PatchDomain {
    /// Number of primitives used by the spatial index.
    pub fn pieces(&self) -> usize {
        match self {
            PatchDomain::TubeSegment { vertices, .. } => vertices.len().saturating_sub(1).max(1),
            _ => 1,
        }
    }

    /// Signed distance of one primitive (negative inside), ignoring clips.
    #[inline]
    pub fn piece_sdf(&self, k: usize, p: &[f64]) -> f64 {
        match self {
            PatchDomain::ShiftedWedge { cone, .. } => cone_sdf(&cone.a, &cone.b, cone.ra, cone.rb, p).1,
            PatchDomain::TubeSegment { vertices, radii, .. } => {
                if vertices.len() == 1 {
                    return dist(p, &vertices[0]) - radii[0];
                }
                cone_sdf(&vertices[k], &vertices[k + 1], radii[k], radii[k + 1], p).1
            }
            PatchDomain::Ball { center, radius } => dist(p, center) - radius,
        }
    }

    /// Whether `p` survives the domain's clip (`S_α` removal or exit cap).
    #[inline]
    pub fn clip_ok(&self, s: &SetRep, p: &[f64]) -> bool {
        match self {
            PatchDomain::ShiftedWedge { alpha, .. } => s.signed_distance(p) > -alpha,
            PatchDomain::TubeSegment { exit: Some(cap), .. } => !cap.contains(p),
            _ => true,
        }
    }

    /// Unclipped signed distance (min over primitives).
    pub fn raw_sdf(&self, p: &[f64]) -> f64 {
        (0..self.pieces()).map(|k| self.piece_sdf(k, p)).fold(f64::INFINITY, f64::min)
    }

    /// Depth of `p` inside the domain; positive iff `p` is a member.
    pub fn depth(&self, s: &SetRep, p: &[f64]) -> f64 {
        let mut d = -self.raw_sdf(p);
        match self {
            PatchDomain::ShiftedWedge { alpha, .. } => d = d.min(s.signed_distance(p) + alpha),
            PatchDomain::TubeSegment { exit: Some(cap), .. } if cap.contains(p) => d = d.min(0.0),
            _ => {}
        }
        d
    }

    pub fn contains(&self, s: &SetRep, p: &[f64]) -> bool {
        self.raw_sdf(p) < 0.0 && self.clip_ok(s, p)
    }

    pub fn piece_bbox(&self, k: usize) -> (Point, Point) {
        match self {
            PatchDomain::ShiftedWedge { cone, .. } => cone.bounding_box(),
            PatchDomain::TubeSegment { vertices, radii, .. } => {
                let j = (k + 1).min(vertices.len() - 1);
                RoundCone::new(vertices[k].clone(), vertices[j].clone(), radii[k], radii[j]).bounding_box()
            }
            PatchDomain::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let (mut lo, mut hi) = self.piece_bbox(0);
        for k in 1..self.pieces() {
            let (l, h) = self.piece_bbox(k);
            for i in 0..lo.len() {
                lo[i] = lo[i].min(l[i]);
                hi[i] = hi[i].max(h[i]);
            }
        }
        (lo, hi)
    }

    /// Planar boundary sample with outward unit normals.
    ///
    /// The wedge seam `∂S_α ∩ Γ` is located by bisection along rays from the
    /// axis, so it is accurate only up to that bisection.
    pub fn boundary_samples_2d(&self, s: &SetRep, n: usize) -> Vec<(Point, Point)> {
        let mut out = Vec::new();
        match self {
            PatchDomain::ShiftedWedge { cone, alpha } => {
                for p in cone.sample_boundary_2d(n) {
                    if s.signed_distance(&p) > -alpha {
                        if let Some(nv) = cone.outward_normal(&p) {
                            out.push((p, nv));
                        }
                    }
                }
                out.extend(wedge_seam(cone, s, *alpha, n / 2));
            }
            PatchDomain::TubeSegment { vertices, radii, exit } => {
                let pieces = self.pieces();
                let per = (n / pieces).max(8);
                for k in 0..pieces {
                    let j = (k + 1).min(vertices.len() - 1);
                    let rc = RoundCone::new(vertices[k].clone(), vertices[j].clone(), radii[k], radii[j]);
                    for p in rc.sample_boundary_2d(per) {
                        // keep points on the union's boundary only
                        let inner = (0..pieces).any(|m| m != k && self.piece_sdf(m, &p) < -1e-9);
                        if inner || exit.as_ref().is_some_and(|c| c.contains(&p)) {
                            continue;
                        }
                        if let Some(nv) = rc.outward_normal(&p) {
                            out.push((p, nv));
                        }
                    }
                }
                if let Some(cap) = exit {
                    // flat face of the truncated end
                    let perp = [-cap.direction[1], cap.direction[0]];
                    let m = (n / 8).max(4);
                    for i in 0..=m {
                        let t = -cap.radius + 2.0 * cap.radius * i as f64 / m as f64;
                        let p = vec![cap.center[0] + t * perp[0], cap.center[1] + t * perp[1]];
                        if self.raw_sdf(&p) < 0.0 {
                            out.push((p, cap.direction.clone()));
                        }
                    }
                }
            }
            PatchDomain::Ball { center, radius } => {
                for k in 0..n {
                    let th = std::f64::consts::TAU * k as f64 / n as f64;
                    out.push((
                        vec![center[0] + radius * th.cos(), center[1] + radius * th.sin()],
                        vec![th.cos(), th.sin()],
                    ));
                }
            }
        }
        out
    }
}

/// Points of `∂S_α` inside the wedge cone, with normal pointing into `S_α`.
fn wedge_seam(cone: &RoundCone, s: &SetRep, alpha: f64, n: usize) -> Vec<(Point, Point)> {
    let Some(u) = normalized(&sub(&cone.b, &cone.a)) else { return Vec::new() };
    let perp = [-u[1], u[0]];
    let len = cone.length();
    let mut out = Vec::new();
    let n = n.max(8);
    for i in 0..n {
        // rays across the cone at fixed lateral offsets, bisect on Δ + α
        let frac = -1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
        let lat = frac * cone.rb;
        let f = |t: f64| {
            let p = vec![cone.a[0] + t * u[0] + lat * perp[0], cone.a[1] + t * u[1] + lat * perp[1]];
            (s.signed_distance(&p) + alpha, p)
        };
        let (mut lo, mut hi) = (0.0, len + cone.rb);
        let (flo, _) = f(lo);
        let (fhi, _) = f(hi);
        if flo <= 0.0 || fhi > 0.0 {
            continue;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if f(mid).0 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // keep the closed side `r ≥ α`, which no patch with `α' ≤ α` contains
        let (_, p) = f(hi);
        if cone.sdf(&p) < 0.0 {
            let g = s_gradient(s, &p);
            out.push((p, g.iter().map(|v| -v).collect()));
        }
    }
    out
}

fn s_gradient(s: &SetRep, p: &[f64]) -> Point {
    let h = 1e-6;
    let g: Point = (0..p.len())
        .map(|k| {
            let mut a = p.to_vec();
            let mut b = p.to_vec();
            a[k] += h;
            b[k] -= h;
            (s.signed_distance(&a) - s.signed_distance(&b)) / (2.0 * h)
        })
        .collect();
    normalized(&g).unwrap_or(g)
}
