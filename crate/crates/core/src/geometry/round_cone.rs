use serde::{Deserialize, Serialize};

use crate::linalg::{axpy, dist, normalized, sub};
use crate::Point;

/// Union of balls `B(c(ℓ), ρ(ℓ))` whose centers run along the segment `a → b`
/// and whose radii vary linearly from `ra` to `rb`.
///
/// The signed distance is exact outside. Inside it returns `min_ℓ |p - c(ℓ)| - ρ(ℓ)`,
/// which has the right sign and underestimates the clearance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundCone {
    pub a: Point,
    pub b: Point,
    pub ra: f64,
    pub rb: f64,
}

/// Allocation-free core of [`RoundCone::sdf`]: returns the axial parameter
/// of the closest ball and the signed distance.
pub fn cone_sdf(a: &[f64], b: &[f64], ra: f64, rb: f64, p: &[f64]) -> (f64, f64) {
    let mut len2 = 0.0;
    let mut ap = 0.0;
    let mut qq = 0.0;
    for i in 0..a.len() {
        let u = b[i] - a[i];
        let q = p[i] - a[i];
        len2 += u * u;
        ap += q * u;
        qq += q * q;
    }
    let len = len2.sqrt();
    if len < 1e-15 {
        return (0.0, qq.sqrt() - ra.max(rb));
    }
    ap /= len;
    let h = (qq - ap * ap).max(0.0).sqrt();
    let k = (rb - ra) / len;
    let l = if k >= 1.0 {
        len
    } else if k <= -1.0 {
        0.0
    } else {
        (ap + k * h / (1.0 - k * k).sqrt()).clamp(0.0, len)
    };
    let dl = ap - l;
    (l, (dl * dl + h * h).sqrt() - (ra + (rb - ra) * l / len))
}

impl RoundCone {
    pub fn new(a: Point, b: Point, ra: f64, rb: f64) -> Self {
        Self { a, b, ra: ra.max(0.0), rb: rb.max(0.0) }
    }

    pub fn length(&self) -> f64 {
        dist(&self.a, &self.b)
    }

    /// Axial parameter of the closest generating ball.
    fn closest(&self, p: &[f64]) -> (f64, Point) {
        let (l, _) = cone_sdf(&self.a, &self.b, self.ra, self.rb, p);
        let len = self.length();
        if len < 1e-15 {
            return (0.0, self.a.clone());
        }
        (l, axpy(&self.a, l / len, &sub(&self.b, &self.a)))
    }

    pub fn sdf(&self, p: &[f64]) -> f64 {
        cone_sdf(&self.a, &self.b, self.ra, self.rb, p).1
    }

    fn radius_at(&self, l: f64) -> f64 {
        let len = self.length();
        if len < 1e-15 {
            self.ra.max(self.rb)
        } else {
            self.ra + (self.rb - self.ra) * l / len
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.sdf(p) <= 0.0
    }

    /// Outward unit normal of the nearest generating ball; `None` on the axis.
    pub fn outward_normal(&self, p: &[f64]) -> Option<Point> {
        let (_, c) = self.closest(p);
        normalized(&sub(p, &c))
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let lo = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(x, y)| (x - self.ra).min(y - self.rb))
            .collect();
        let hi = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(x, y)| (x + self.ra).max(y + self.rb))
            .collect();
        (lo, hi)
    }

    /// Planar boundary sample: two flank segments and both end caps.
    pub fn sample_boundary_2d(&self, n: usize) -> Vec<Point> {
        let len = self.length();
        let n = n.max(8);
        let mut out = Vec::with_capacity(n);
        let Some(u) = normalized(&sub(&self.b, &self.a)) else {
            for k in 0..n {
                let th = std::f64::consts::TAU * k as f64 / n as f64;
                out.push(vec![self.a[0] + self.ra * th.cos(), self.a[1] + self.ra * th.sin()]);
            }
            return out;
        };
        let k = (self.rb - self.ra) / len;
        if k.abs() >= 1.0 {
            let (c, r) = if k > 0.0 { (&self.b, self.rb) } else { (&self.a, self.ra) };
            for j in 0..n {
                let th = std::f64::consts::TAU * j as f64 / n as f64;
                out.push(vec![c[0] + r * th.cos(), c[1] + r * th.sin()]);
            }
            return out;
        }
        // tangent angle of the flank: normal = cosφ·perp - sinφ·u with sinφ = k
        let phi = k.asin();
        let base = u[1].atan2(u[0]);
        let m = n / 4;
        let cap = n / 4;
        for side in [1.0, -1.0] {
            for j in 0..=m {
                let l = len * j as f64 / m as f64;
                let c = axpy(&self.a, l, &u);
                let r = self.radius_at(l);
                let ang = base + side * (std::f64::consts::FRAC_PI_2 + phi);
                out.push(vec![c[0] + r * ang.cos(), c[1] + r * ang.sin()]);
            }
        }
        // front cap at b spans |angle - base| < π/2 + φ; back cap at a spans the rest
        let span_b = std::f64::consts::FRAC_PI_2 + phi;
        for j in 1..cap {
            let ang = base - span_b + 2.0 * span_b * j as f64 / cap as f64;
            out.push(vec![self.b[0] + self.rb * ang.cos(), self.b[1] + self.rb * ang.sin()]);
        }
        let span_a = std::f64::consts::PI - span_b;
        for j in 1..cap {
            let ang = base + std::f64::consts::PI - span_a + 2.0 * span_a * j as f64 / cap as f64;
            out.push(vec![self.a[0] + self.ra * ang.cos(), self.a[1] + self.ra * ang.sin()]);
        }
        out
    }
}
