use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{dist, norm};
use crate::Point;

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A set known only through a signed-distance evaluator.
///
/// `h` is the spatial resolution the evaluator is trusted to; `lo`/`hi` bound
/// the set. `features` are points that every boundary sample must include
/// (polygon vertices, pinch points).
#[derive(Clone)]
pub struct DistanceOracle {
    eval: Evaluator,
    pub h: f64,
    pub lo: Point,
    pub hi: Point,
    pub features: Vec<Point>,
}

impl fmt::Debug for DistanceOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DistanceOracle")
            .field("h", &self.h)
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("features", &self.features.len())
            .finish()
    }
}

impl DistanceOracle {
    pub fn new<F>(eval: F, h: f64, lo: Point, hi: Point) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { eval: Arc::new(eval), h, lo, hi, features: Vec::new() }
    }

    pub fn with_features(mut self, features: Vec<Point>) -> Self {
        self.features = features;
        self
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Exact signed distance of a simple (possibly nonconvex) polygon in the plane.
    pub fn polygon(vertices: Vec<[f64; 2]>, h: f64) -> Self {
        let mut lo = vec![f64::INFINITY; 2];
        let mut hi = vec![f64::NEG_INFINITY; 2];
        for v in &vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        let features = vertices.iter().map(|v| v.to_vec()).collect();
        let verts = vertices.clone();
        Self::new(move |x| polygon_sdf(&verts, x), h, lo, hi).with_features(features)
    }

    /// Union of sets; exact wherever the pieces meet at most in isolated points.
    pub fn union(parts: Vec<DistanceOracle>) -> Self {
        let d = parts[0].dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut features = Vec::new();
        let mut h = f64::INFINITY;
        for p in &parts {
            for k in 0..d {
                lo[k] = lo[k].min(p.lo[k]);
                hi[k] = hi[k].max(p.hi[k]);
            }
            features.extend(p.features.iter().cloned());
            h = h.min(p.h);
        }
        Self::new(
            move |x| parts.iter().map(|p| p.eval(x)).fold(f64::INFINITY, f64::min),
            h,
            lo,
            hi,
        )
        .with_features(features)
    }

    /// `{Δ <= -r}` represented by `Δ + r`.
    pub fn eroded(&self, r: f64) -> Self {
        let base = self.clone();
        let features = Vec::new();
        Self::new(move |x| base.eval(x) + r, self.h, self.lo.clone(), self.hi.clone())
            .with_features(features)
    }

    /// Central-difference gradient of the evaluator.
    pub fn gradient(&self, x: &[f64]) -> Point {
        let step = (self.h * 1e-3).max(1e-7);
        let mut g = vec![0.0; x.len()];
        let mut y = x.to_vec();
        for k in 0..x.len() {
            y[k] = x[k] + step;
            let fp = self.eval(&y);
            y[k] = x[k] - step;
            let fm = self.eval(&y);
            y[k] = x[k];
            g[k] = (fp - fm) / (2.0 * step);
        }
        g
    }

    /// Largest sampled ratio `|Δ(x) - Δ(y)| / |x - y|` over random pairs in the box.
    pub fn sampled_lipschitz(&self, pairs: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for _ in 0..pairs {
            let x: Point = (0..d).map(|k| rng.gen_range(self.lo[k]..=self.hi[k])).collect();
            let y: Point = (0..d).map(|k| rng.gen_range(self.lo[k]..=self.hi[k])).collect();
            let dxy = dist(&x, &y);
            if dxy > 1e-12 {
                worst = worst.max((self.eval(&x) - self.eval(&y)).abs() / dxy);
            }
        }
        worst
    }

    /// Pushes `z` onto the zero level set by Newton steps along the gradient.
    pub fn project_to_level(&self, z: &[f64]) -> Point {
        let mut y = z.to_vec();
        for _ in 0..8 {
            let v = self.eval(&y);
            if v.abs() < 1e-12 {
                break;
            }
            let g = self.gradient(&y);
            let gn = norm(&g);
            if gn < 1e-12 {
                break;
            }
            for k in 0..y.len() {
                y[k] -= v * g[k] / (gn * gn);
            }
        }
        y
    }
}

fn segment_distance(a: &[f64; 2], b: &[f64; 2], x: &[f64]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ax = [x[0] - a[0], x[1] - a[1]];
    let l2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if l2 > 0.0 { ((ax[0] * ab[0] + ax[1] * ab[1]) / l2).clamp(0.0, 1.0) } else { 0.0 };
    let px = ax[0] - t * ab[0];
    let py = ax[1] - t * ab[1];
    (px * px + py * py).sqrt()
}

/// Signed distance to a simple polygon: negative inside (even-odd rule).
pub(crate) fn polygon_sdf(vertices: &[[f64; 2]], x: &[f64]) -> f64 {
    let n = vertices.len();
    let mut d = f64::INFINITY;
    let mut inside = false;
    for i in 0..n {
        let a = &vertices[i];
        let b = &vertices[(i + 1) % n];
        d = d.min(segment_distance(a, b, x));
        if (a[1] > x[1]) != (b[1] > x[1]) {
            let xc = a[0] + (x[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if x[0] < xc {
                inside = !inside;
            }
        }
    }
    if inside {
        -d
    } else {
        d
    }
}
