//! Control systems `x' = f(x, u)` with `u` drawn from a finite sample of `U`,
//! piecewise-constant open-loop controls and their RK4 integration.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::SetRep;
use crate::linalg::{add, axpy, dist, dot, norm, scale, sub};
use crate::{Error, Point, Result};

/// States with norm above this are treated as a blow-up.
pub const BLOWUP: f64 = 1e6;

pub type FieldFn = Arc<dyn Fn(&[f64], &[f64]) -> Point + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainTag {
    Global,
    RestrictedToS,
}

#[derive(Clone)]
pub struct ControlSystem {
    pub name: String,
    pub dim: usize,
    f: FieldFn,
    /// Lipschitz constant of `f` in `x`.
    pub lipschitz: f64,
    /// `|f(x, u)| <= growth · (1 + |x|)`.
    pub growth: f64,
    pub controls: Vec<Point>,
    pub domain: DomainTag,
}

impl fmt::Debug for ControlSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlSystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .field("growth", &self.growth)
            .field("controls", &self.controls.len())
            .field("domain", &self.domain)
            .finish()
    }
}

/// Unit vectors at angles `2π(k + phase)/n`.
pub fn unit_directions(n: usize, phase: f64) -> Vec<Point> {
    (0..n)
        .map(|k| {
            let th = 2.0 * PI * (k as f64 + phase) / n as f64;
            vec![th.cos(), th.sin()]
        })
        .collect()
}

impl ControlSystem {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        f: FieldFn,
        lipschitz: f64,
        growth: f64,
        controls: Vec<Point>,
    ) -> Self {
        Self { name: name.into(), dim, f, lipschitz, growth, controls, domain: DomainTag::Global }
    }

    pub fn restricted(mut self) -> Self {
        self.domain = DomainTag::RestrictedToS;
        self
    }

    #[inline]
    pub fn eval(&self, x: &[f64], u: &[f64]) -> Point {
        (self.f)(x, u)
    }

    #[inline]
    pub fn eval_idx(&self, x: &[f64], i: usize) -> Point {
        (self.f)(x, &self.controls[i])
    }

    /// `x' = u` in the plane; `U` holds `n` unit directions, plus zero if asked.
    pub fn single_integrator(n: usize, phase: f64, with_zero: bool) -> Self {
        let mut controls = unit_directions(n, phase);
        if with_zero {
            controls.push(vec![0.0, 0.0]);
        }
        Self::new("single-integrator", 2, Arc::new(|_x, u| u.to_vec()), 0.0, 1.0, controls)
    }

    /// `x' = -x + u`, same control sample as [`ControlSystem::single_integrator`].
    pub fn linear_stable(n: usize, phase: f64) -> Self {
        let mut controls = unit_directions(n, phase);
        controls.push(vec![0.0, 0.0]);
        Self::new("linear-stable", 2, Arc::new(|x, u| sub(u, x)), 1.0, 1.0, controls)
    }

    /// `(x, y, θ)' = (v cos θ, v sin θ, ω)` on a `(v, ω)` grid in `[-1, 1]²`.
    pub fn unicycle(levels: usize) -> Self {
        let levels = levels.max(2);
        let vals: Vec<f64> = (0..levels).map(|i| -1.0 + 2.0 * i as f64 / (levels - 1) as f64).collect();
        let mut controls = Vec::new();
        for &v in &vals {
            for &w in &vals {
                controls.push(vec![v, w]);
            }
        }
        let f: FieldFn = Arc::new(|x, u| vec![u[0] * x[2].cos(), u[0] * x[2].sin(), u[1]]);
        Self::new("unicycle", 3, f, 1.0, 2f64.sqrt(), controls)
    }

    /// Built-in system by name.
    pub fn builtin(name: &str, n_directions: usize, phase: f64) -> Result<Self> {
        match name {
            "single-integrator" => Ok(Self::single_integrator(n_directions, phase, true)),
            "linear-stable" => Ok(Self::linear_stable(n_directions, phase)),
            "unicycle" => Ok(Self::unicycle(3)),
            other => Err(Error::Scenario(format!("unknown system '{other}'"))),
        }
    }

    /// Largest `|f(x, u)|` over the given states and all sampled controls.
    pub fn max_speed(&self, states: &[Point]) -> f64 {
        let mut m: f64 = 0.0;
        for x in states {
            for u in &self.controls {
                m = m.max(norm(&self.eval(x, u)));
            }
        }
        m
    }

    /// Lipschitz extension off `S`:
    /// `f̃_i(x, u) = min_{y ∈ Y} f_i(y, u) + L_f |x - y|` over a grid `Y ⊂ S`.
    pub fn extend_field(&self, s: &SetRep, grid_h: f64) -> Result<ControlSystem> {
        if grid_h <= 0.0 {
            return Err(Error::Precondition("grid_h must be positive".into()));
        }
        let (lo, hi) = s.bounding_box();
        let d = lo.len();
        let counts: Vec<usize> = (0..d).map(|k| ((hi[k] - lo[k]) / grid_h).round() as usize + 1).collect();
        let total: usize = counts.iter().product();
        let mut ys: Vec<Point> = Vec::new();
        for mut idx in 0..total {
            let y: Point = (0..d)
                .map(|k| {
                    let i = idx % counts[k];
                    idx /= counts[k];
                    lo[k] + i as f64 * grid_h
                })
                .collect();
            if s.signed_distance(&y) <= 1e-12 {
                ys.push(y);
            }
        }
        let n_bd = (s.diameter() * PI / grid_h).ceil() as usize;
        ys.extend(s.sample_boundary(n_bd.max(16)));
        if ys.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let ys = Arc::new(ys);
        let inner = self.f.clone();
        let l = self.lipschitz;
        let f: FieldFn = Arc::new(move |x, u| {
            let mut best = vec![f64::INFINITY; x.len()];
            for y in ys.iter() {
                let fy = inner(y, u);
                let pen = l * dist(x, y);
                if pen == 0.0 && x == y.as_slice() {
                    // the exact minimum at a node; other terms can undercut it by rounding
                    return fy;
                }
                for (b, v) in best.iter_mut().zip(&fy) {
                    *b = b.min(v + pen);
                }
            }
            best
        });
        let mut out = ControlSystem::new(
            format!("{}-extended", self.name),
            self.dim,
            f,
            self.lipschitz,
            self.growth,
            self.controls.clone(),
        );
        out.domain = DomainTag::Global;
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub lipschitz_ratio: f64,
    pub growth_ratio: f64,
    /// Largest distance of a probed convex combination from the hull of sampled velocities.
    pub hull_distance: f64,
    pub pairs: usize,
}

/// Spot-checks Lipschitz continuity, growth and convexity of the velocity set.
///
/// Convexity probes use controls interpolated between two sampled controls
/// with the interpolated norm preserved, which stands in for `U` itself.
pub fn verify_regularity(sys: &ControlSystem, n_pairs: usize, region: &SetRep, seed: u64) -> RegularityReport {
    let pts = region.sample_interior(2 * n_pairs.max(1), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let mut lip: f64 = 0.0;
    let mut growth: f64 = 0.0;
    let mut hull: f64 = 0.0;
    let m = sys.controls.len();
    for pair in pts.chunks(2) {
        if pair.len() < 2 {
            break;
        }
        let (x, y) = (&pair[0], &pair[1]);
        let u = &sys.controls[rng.gen_range(0..m)];
        let dxy = dist(x, y);
        if dxy > 1e-12 {
            lip = lip.max(dist(&sys.eval(x, u), &sys.eval(y, u)) / dxy);
        }
        growth = growth.max(norm(&sys.eval(x, u)) / (1.0 + norm(x)));
        let vel: Vec<Point> = sys.controls.iter().map(|c| sys.eval(x, c)).collect();
        let u1 = interpolated_control(&sys.controls, &mut rng);
        let u2 = interpolated_control(&sys.controls, &mut rng);
        for lam in [0.25, 0.5, 0.75] {
            let q = add(&scale(&sys.eval(x, &u1), lam), &scale(&sys.eval(x, &u2), 1.0 - lam));
            hull = hull.max(hull_distance(&vel, &q));
        }
    }
    RegularityReport { lipschitz_ratio: lip, growth_ratio: growth, hull_distance: hull, pairs: n_pairs }
}

fn interpolated_control<R: Rng>(controls: &[Point], rng: &mut R) -> Point {
    let a = &controls[rng.gen_range(0..controls.len())];
    let b = &controls[rng.gen_range(0..controls.len())];
    let t: f64 = rng.gen();
    let w = add(&scale(a, 1.0 - t), &scale(b, t));
    let target = (1.0 - t) * norm(a) + t * norm(b);
    let nw = norm(&w);
    if nw < 1e-12 {
        w
    } else {
        scale(&w, target / nw)
    }
}

/// Distance from `q` to the convex hull of `pts` (Frank-Wolfe with exact line search).
pub fn hull_distance(pts: &[Point], q: &[f64]) -> f64 {
    let mut z = pts
        .iter()
        .min_by(|a, b| dist(a, q).total_cmp(&dist(b, q)))
        .cloned()
        .unwrap_or_else(|| q.to_vec());
    for _ in 0..2000 {
        let g = sub(&z, q);
        let s = pts.iter().min_by(|a, b| dot(a, &g).total_cmp(&dot(b, &g))).unwrap();
        let dir = sub(s, &z);
        let gap = -dot(&g, &dir);
        if gap <= 1e-14 {
            break;
        }
        let t = (gap / dot(&dir, &dir)).clamp(0.0, 1.0);
        z = axpy(&z, t, &dir);
    }
    dist(&z, q)
}

/// Piecewise-constant control: value `controls[k]` on `(t_k, t_{k+1}]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenLoopControl {
    pub breakpoints: Vec<f64>,
    #[serde(rename = "control_indices")]
    pub controls: Vec<usize>,
}

impl OpenLoopControl {
    pub fn empty() -> Self {
        Self { breakpoints: vec![0.0], controls: Vec::new() }
    }

    /// Equal dwell intervals of length `dt`.
    pub fn from_steps(dt: f64, controls: Vec<usize>) -> Self {
        let breakpoints = (0..=controls.len()).map(|k| k as f64 * dt).collect();
        Self { breakpoints, controls }
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap_or(&0.0)
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    /// Control index in force at time `t`.
    pub fn control_at(&self, t: f64) -> Option<usize> {
        if self.controls.is_empty() {
            return None;
        }
        let k = self.breakpoints[1..].partition_point(|&b| b < t);
        Some(self.controls[k.min(self.controls.len() - 1)])
    }

    /// Merges consecutive intervals with the same control.
    pub fn merged(&self) -> Self {
        let mut bp = vec![0.0];
        let mut cs: Vec<usize> = Vec::new();
        for (k, &c) in self.controls.iter().enumerate() {
            if cs.last() == Some(&c) {
                *bp.last_mut().unwrap() = self.breakpoints[k + 1];
            } else {
                cs.push(c);
                bp.push(self.breakpoints[k + 1]);
            }
        }
        Self { breakpoints: bp, controls: cs }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<Point>,
    /// Control index used on the step ending at `states[k + 1]`.
    pub controls: Vec<usize>,
    /// Largest per-step gap between the increment and a trapezoid quadrature of `f`.
    pub residual: f64,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("nonempty trajectory")
    }
}

/// One classical RK4 step with the control frozen.
#[inline]
pub fn rk4_step(sys: &ControlSystem, x: &[f64], u: &[f64], h: f64) -> Point {
    let k1 = sys.eval(x, u);
    let k2 = sys.eval(&axpy(x, h / 2.0, &k1), u);
    let k3 = sys.eval(&axpy(x, h / 2.0, &k2), u);
    let k4 = sys.eval(&axpy(x, h, &k3), u);
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Fixed-step RK4 inside each constant-control interval; each interval is cut
/// into `ceil(len / dt)` equal steps so breakpoints fall on the grid.
pub fn integrate_open_loop(sys: &ControlSystem, x0: &[f64], u: &OpenLoopControl, dt: f64) -> Result<Trajectory> {
    if dt <= 0.0 {
        return Err(Error::Precondition("dt must be positive".into()));
    }
    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    let mut controls = Vec::new();
    let mut residual: f64 = 0.0;
    for (k, &c) in u.controls.iter().enumerate() {
        let (a, b) = (u.breakpoints[k], u.breakpoints[k + 1]);
        let len = b - a;
        if len <= 0.0 {
            continue;
        }
        let n = ((len / dt) - 1e-9).ceil().max(1.0) as usize;
        let h = len / n as f64;
        let uv = &sys.controls[c];
        for j in 0..n {
            let x = states.last().unwrap();
            let y = rk4_step(sys, x, uv, h);
            let trap = add(&scale(&sys.eval(x, uv), h / 2.0), &scale(&sys.eval(&y, uv), h / 2.0));
            residual = residual.max(dist(&sub(&y, x), &trap));
            let t = if j + 1 == n { b } else { a + (j + 1) as f64 * h };
            if !y.iter().all(|v| v.is_finite()) || norm(&y) > BLOWUP {
                return Err(Error::Divergence(t));
            }
            times.push(t);
            states.push(y);
            controls.push(c);
        }
    }
    Ok(Trajectory { dt, times, states, controls, residual })
}

/// First grid time with `d(x_k, Σ) <= delta`.
pub fn reach_time(traj: &Trajectory, target: &SetRep, delta: f64) -> Option<f64> {
    traj.states
        .iter()
        .zip(&traj.times)
        .find(|(x, _)| target.distance(x) <= delta)
        .map(|(_, &t)| t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const_field(v: Point) -> ControlSystem {
        ControlSystem::new("test", 2, Arc::new(|_x, u| u.to_vec()), 0.0, 1.0, vec![v, vec![0.0, 1.0]])
    }

    fn decay() -> ControlSystem {
        ControlSystem::new("decay", 2, Arc::new(|x, _u| scale(x, -1.0)), 1.0, 1.0, vec![vec![0.0, 0.0]])
    }

    #[test]
    fn constant_velocity() {
        let sys = const_field(vec![1.0, 0.0]);
        let tr = integrate_open_loop(&sys, &[0.0, 0.0], &OpenLoopControl::from_steps(1.0, vec![0]), 0.01).unwrap();
        assert!(dist(tr.last(), &[1.0, 0.0]) < 1e-12);
        assert_eq!(*tr.times.last().unwrap(), 1.0);
    }

    #[test]
    fn linear_decay() {
        let tr = integrate_open_loop(&decay(), &[1.0, 0.0], &OpenLoopControl::from_steps(1.0, vec![0]), 0.01).unwrap();
        assert!((tr.last()[0] - (-1f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn two_piece_control() {
        let sys = const_field(vec![1.0, 0.0]);
        let tr = integrate_open_loop(&sys, &[0.0, 0.0], &OpenLoopControl::from_steps(0.5, vec![0, 1]), 0.01).unwrap();
        assert!(dist(tr.last(), &[0.5, 0.5]) < 1e-12);
    }

    #[test]
    fn rk4_order() {
        let err = |dt: f64| {
            let sys = ControlSystem::new("rot", 2, Arc::new(|x, _u| vec![-x[1] - 0.3 * x[0], x[0]]), 1.1, 1.1, vec![vec![0.0]]);
            let tr = integrate_open_loop(&sys, &[1.0, 0.0], &OpenLoopControl::from_steps(2.0, vec![0]), dt).unwrap();
            let fine = integrate_open_loop(&sys, &[1.0, 0.0], &OpenLoopControl::from_steps(2.0, vec![0]), 1e-4).unwrap();
            dist(tr.last(), fine.last())
        };
        assert!(err(0.1) / err(0.05) >= 8.0);
    }

    #[test]
    fn divergence_detected() {
        let sys = ControlSystem::new("blow", 1, Arc::new(|x, _u| vec![x[0] * x[0]]), 0.0, 0.0, vec![vec![0.0]]);
        let r = integrate_open_loop(&sys, &[1.0], &OpenLoopControl::from_steps(2.0, vec![0]), 0.01);
        assert!(matches!(r, Err(Error::Divergence(_))));
    }

    #[test]
    fn regularity_examples() {
        let sq = SetRep::square(1.0);
        let si = ControlSystem::single_integrator(16, 0.0, true);
        let rep = verify_regularity(&si, 500, &sq, 1);
        assert_eq!(rep.lipschitz_ratio, 0.0);
        assert!(rep.growth_ratio <= 1.0 + 1e-12);
        assert!(rep.hull_distance <= (PI / 16.0).sin() / 2.0);
        let ls = ControlSystem::linear_stable(16, 0.0);
        let rep = verify_regularity(&ls, 2000, &sq, 2);
        assert!(rep.lipschitz_ratio <= 1.0 + 1e-9 && rep.lipschitz_ratio > 0.999);
    }

    #[test]
    fn extension_examples() {
        let sq = SetRep::square(1.0);
        let si = ControlSystem::single_integrator(8, 0.0, false).restricted();
        let ext = si.extend_field(&sq, 0.1).unwrap();
        assert_eq!(ext.eval(&[3.0, -2.0], &[0.6, 0.8]), vec![0.6, 0.8]);

        let lin = ControlSystem::new("neg", 2, Arc::new(|x, _u| scale(x, -1.0)), 1.0, 1.0, vec![vec![0.0, 0.0]]).restricted();
        let ext = lin.extend_field(&sq, 0.01).unwrap();
        // brute-force oracle over the same grid resolution
        let x = [2.0, 0.0];
        let mut oracle = f64::INFINITY;
        for i in 0..=200 {
            for j in 0..=200 {
                let y = [-1.0 + 0.01 * i as f64, -1.0 + 0.01 * j as f64];
                oracle = oracle.min(-y[0] + dist(&x, &y));
            }
        }
        assert!((ext.eval(&x, &[0.0, 0.0])[0] - oracle).abs() < 1e-9);
        assert!(oracle.abs() < 1e-9);
        let y = [-1.0 + 130.0 * 0.01, -1.0 + 50.0 * 0.01];
        assert_eq!(ext.eval(&y, &[0.0, 0.0]), lin.eval(&y, &[0.0, 0.0]));
    }

    #[test]
    fn reach_time_examples() {
        let sys = const_field(vec![-1.0, 0.0]);
        let tr = integrate_open_loop(&sys, &[0.9, 0.0], &OpenLoopControl::from_steps(1.0, vec![0]), 0.01).unwrap();
        let origin = SetRep::point(vec![0.0, 0.0]);
        assert!((reach_time(&tr, &origin, 0.2).unwrap() - 0.7).abs() <= 0.01 + 1e-12);
        let away = const_field(vec![1.0, 0.0]);
        let tr2 = integrate_open_loop(&away, &[0.9, 0.0], &OpenLoopControl::from_steps(1.0, vec![0]), 0.01).unwrap();
        assert!(reach_time(&tr2, &origin, 0.2).is_none());
        let tr3 = integrate_open_loop(&sys, &[0.1, 0.0], &OpenLoopControl::from_steps(1.0, vec![0]), 0.01).unwrap();
        assert_eq!(reach_time(&tr3, &origin, 0.2), Some(0.0));
    }

    #[test]
    fn control_lookup_is_left_open() {
        let u = OpenLoopControl::from_steps(0.5, vec![3, 4]);
        assert_eq!(u.control_at(0.0), Some(3));
        assert_eq!(u.control_at(0.5), Some(3));
        assert_eq!(u.control_at(0.50001), Some(4));
        let m = OpenLoopControl::from_steps(0.5, vec![1, 1, 2]).merged();
        assert_eq!(m.controls, vec![1, 2]);
        assert_eq!(m.breakpoints, vec![0.0, 1.0, 1.5]);
    }
}
