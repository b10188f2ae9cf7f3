use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{run_loop, ClosedLoopRun, Goal, Inputs};
use crate::dynamics::ControlSystem;
use crate::geometry::random_unit;
use crate::linalg::{dist, norm, scale};
use crate::synthesis::PatchyFeedback;
use crate::{Error, Point, Result};

/// Right-continuous step function on `[b_0, b_n)`, zero elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstant {
    pub breakpoints: Vec<f64>,
    pub values: Vec<Point>,
}

impl PiecewiseConstant {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Point>) -> Result<Self> {
        let ok = (values.is_empty() && breakpoints.len() <= 1)
            || (breakpoints.len() == values.len() + 1 && breakpoints.windows(2).all(|w| w[0] < w[1]));
        if !ok {
            return Err(Error::Precondition("piecewise constant map needs increasing breakpoints, one more than values".into()));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn zero() -> Self {
        Self { breakpoints: Vec::new(), values: Vec::new() }
    }

    fn piece(&self, t: f64) -> Option<usize> {
        if self.values.is_empty() || t < self.breakpoints[0] {
            return None;
        }
        let k = self.breakpoints.partition_point(|&b| b <= t);
        (k <= self.values.len()).then(|| k - 1)
    }

    /// Value at `t`, or `None` where the map is zero.
    pub fn at(&self, t: f64) -> Option<&[f64]> {
        self.piece(t).map(|k| self.values[k].as_slice())
    }

    /// First time after `t` where the value actually changes.
    pub fn next_change(&self, t: f64) -> f64 {
        let zero = |v: Option<&[f64]>| v.is_none_or(|v| v.iter().all(|&a| a == 0.0));
        let now = self.at(t);
        for &b in self.breakpoints.iter().filter(|&&b| b > t) {
            let next = self.at(b);
            let same = match (now, next) {
                (Some(a), Some(c)) => a == c,
                (a, c) => zero(a) && zero(c),
            };
            if !same {
                return b;
            }
        }
        f64::INFINITY
    }

    pub fn l1(&self) -> f64 {
        self.values.iter().zip(self.breakpoints.windows(2)).map(|(v, w)| norm(v) * (w[1] - w[0])).sum()
    }

    /// Jumps at interior breakpoints.
    pub fn total_variation(&self) -> f64 {
        self.values.windows(2).map(|w| dist(&w[0], &w[1])).sum()
    }

    fn scaled(&self, c: f64) -> Self {
        Self { breakpoints: self.breakpoints.clone(), values: self.values.iter().map(|v| scale(v, c)).collect() }
    }
}

/// Measurement noise `ζ` and additive disturbance `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub zeta: PiecewiseConstant,
    pub d: PiecewiseConstant,
}

impl Perturbation {
    pub fn zero() -> Self {
        Self { zeta: PiecewiseConstant::zero(), d: PiecewiseConstant::zero() }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        PiecewiseConstant::new(p.zeta.breakpoints.clone(), p.zeta.values.clone())?;
        PiecewiseConstant::new(p.d.breakpoints.clone(), p.d.values.clone())?;
        Ok(p)
    }

    /// Seeded perturbation with `‖ζ‖_BV` and `‖d‖_L1` each a random fraction in `[0.5, 0.99)` of `level`.
    pub fn generate(spec: &PerturbSpec, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng| {
            let mut b: Vec<f64> = (0..spec.pieces + 1).map(|_| rng.gen::<f64>() * spec.horizon).collect();
            b.sort_by(f64::total_cmp);
            b.dedup();
            let values: Vec<Point> = (1..b.len()).map(|_| { let u = random_unit(rng, dim); scale(&u, rng.gen::<f64>()) }).collect();
            PiecewiseConstant { breakpoints: b, values }
        };
        let zeta = draw(&mut rng);
        let d = draw(&mut rng);
        let (bv, _) = perturbation_norms(&Perturbation { zeta: zeta.clone(), d: PiecewiseConstant::zero() });
        let l1 = d.l1();
        let fz = spec.level * rng.gen_range(0.5..0.99);
        let fd = spec.level * rng.gen_range(0.5..0.99);
        Self {
            zeta: if bv > 0.0 { zeta.scaled(fz / bv) } else { zeta },
            d: if l1 > 0.0 { d.scaled(fd / l1) } else { d },
        }
    }
}

/// Generator settings for one ladder level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub level: f64,
    pub pieces: usize,
    pub horizon: f64,
}

/// `(‖ζ‖_L1 + TV(ζ), ‖d‖_L1)`.
pub fn perturbation_norms(p: &Perturbation) -> (f64, f64) {
    (p.zeta.l1() + p.zeta.total_variation(), p.d.l1())
}

/// `ẏ = f(y, U(y + ζ)) + d` with the same event handling as the nominal loop.
pub fn simulate_perturbed(
    sys: &ControlSystem,
    fb: &PatchyFeedback,
    x0: &[f64],
    pert: &Perturbation,
    dt: f64,
    t_max: f64,
    goal: Option<&Goal>,
) -> Result<ClosedLoopRun> {
    let zero = vec![0.0; x0.len()];
    run_loop(sys, fb, x0, dt, t_max, goal, |t| {
        let zeta = pert.zeta.at(t).unwrap_or(&zero);
        let d = pert.d.at(t).unwrap_or(&zero);
        let end = pert.zeta.next_change(t).min(pert.d.next_change(t));
        (Inputs { zeta, d }, end)
    })
}
