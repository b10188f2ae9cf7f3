//! Scenario files (TOML). Every numeric default lives on these types.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::ControlSystem;
use crate::geometry::{CertificateConfig, Halfspace, Polytope, SetRep};
use crate::synthesis::{BoundaryConfig, SynthesisConfig, TubeConfig};
use crate::{Error, Point, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Box { lo: Point, hi: Point },
    Ball { center: Point, radius: f64 },
    Point { center: Point },
    Polytope { faces: Vec<Halfspace> },
}

impl SetSpec {
    pub fn build(&self) -> Result<SetRep> {
        match self {
            SetSpec::Box { lo, hi } => Ok(SetRep::Polytope(Polytope::boxed(lo, hi)?)),
            SetSpec::Ball { center, radius } => {
                if !(*radius >= 0.0) || center.is_empty() {
                    return Err(Error::Scenario("ball needs a center and radius >= 0".into()));
                }
                Ok(SetRep::ball(center.clone(), *radius))
            }
            SetSpec::Point { center } => {
                if center.is_empty() {
                    return Err(Error::Scenario("point needs coordinates".into()));
                }
                Ok(SetRep::point(center.clone()))
            }
            SetSpec::Polytope { faces } => Ok(SetRep::Polytope(Polytope::new(faces.clone())?)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSpec {
    /// `single-integrator`, `linear-stable` or `unicycle`.
    pub name: String,
    /// Number of unit directions in the planar control sample.
    pub directions: usize,
    /// Directions sit at angles `2π(k + phase)/directions`.
    pub phase: f64,
    /// Replaces the built-in control sample when given.
    pub controls: Option<Vec<Point>>,
}

impl Default for SystemSpec {
    fn default() -> Self {
        Self { name: "single-integrator".into(), directions: 16, phase: 0.0, controls: None }
    }
}

impl SystemSpec {
    pub fn build(&self) -> Result<ControlSystem> {
        let mut sys = ControlSystem::builtin(&self.name, self.directions, self.phase)?;
        if let Some(u) = &self.controls {
            if u.is_empty() || u.iter().any(|c| c.len() != sys.controls[0].len()) {
                return Err(Error::Scenario("controls must be nonempty with matching length".into()));
            }
            sys.controls = u.clone();
        }
        Ok(sys)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSettings {
    pub dwell: f64,
    pub horizon: f64,
    pub node_budget: usize,
    pub substeps: usize,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self { dwell: 0.1, horizon: 6.0, node_budget: 200_000, substeps: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSettings {
    pub boundary: BoundaryConfig,
    pub tube: TubeConfig,
    /// Tube radius `ε` in units of `γ`.
    pub tube_eps_factor: f64,
    /// Spacing of the coverage grid (the seed grid).
    pub coverage_h: f64,
    pub coverage_margin: f64,
    pub max_seeds: usize,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        let d = SynthesisConfig::default();
        Self {
            boundary: d.boundary,
            tube: d.tube,
            tube_eps_factor: d.tube_eps_factor,
            coverage_h: d.coverage_h,
            coverage_margin: d.coverage_margin,
            max_seeds: d.max_seeds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSettings {
    pub dt: f64,
    pub t_max: f64,
    /// Initial states: an inclusive `grid × grid` lattice over the bounding box of `S`.
    pub grid: usize,
    /// Boundary tolerance for "stayed in S".
    pub tol_bd: f64,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self { dt: 0.01, t_max: 20.0, grid: 10, tol_bd: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSettings {
    pub n_boundary: usize,
    pub certificate: CertificateConfig,
    pub regularity_pairs: usize,
    /// Geometric grid size for the `r_o` search.
    pub r_levels: usize,
    /// Allowed relative excess of the sampled Lipschitz and growth ratios.
    pub regularity_tol: f64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self { n_boundary: 256, certificate: CertificateConfig::default(), regularity_pairs: 1000, r_levels: 8, regularity_tol: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSettings {
    /// Largest level of the geometric ladder; each rung halves it.
    pub top: f64,
    pub rungs: usize,
    pub per_level: usize,
    /// Constant pieces per perturbation signal.
    pub pieces: usize,
}

impl Default for PerturbSettings {
    fn default() -> Self {
        Self { top: 0.16, rungs: 5, per_level: 50, pieces: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub system: SystemSpec,
    pub constraint: SetSpec,
    pub target: SetSpec,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Defaults to `δ/4`.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub planner: PlannerSettings,
    #[serde(default)]
    pub synthesis: SynthesisSettings,
    #[serde(default)]
    pub simulation: SimulationSettings,
    #[serde(default)]
    pub check: CheckSettings,
    #[serde(default)]
    pub perturb: PerturbSettings,
    #[serde(default)]
    pub seed: u64,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_delta() -> f64 {
    0.2
}

/// Built objects of a validated scenario.
#[derive(Clone, Debug)]
pub struct Built {
    pub system: ControlSystem,
    pub constraint: SetRep,
    pub target: SetRep,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(self.delta / 4.0)
    }

    /// Checks the numeric invariants; set geometry is checked by [`Scenario::build`].
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Scenario(m.into()));
        let g = self.gamma();
        if !(self.delta > 0.0) || !(g > 0.0) {
            return bad("delta and gamma must be positive");
        }
        if 4.0 * g > self.delta * (1.0 + 1e-12) {
            return bad("need 4·gamma <= delta");
        }
        let p = &self.planner;
        if !(p.dwell > 0.0) || !(p.horizon > 0.0) || p.substeps == 0 || p.node_budget == 0 {
            return bad("planner settings must be positive");
        }
        let s = &self.simulation;
        if !(s.dt > 0.0) || !(s.t_max > 0.0) || s.grid == 0 || !(s.tol_bd > 0.0) {
            return bad("simulation settings must be positive");
        }
        let y = &self.synthesis;
        if !(y.coverage_h > 0.0) || !(y.coverage_margin >= 0.0) || !(y.tube_eps_factor > 0.0) {
            return bad("synthesis settings must be positive");
        }
        if self.check.n_boundary == 0 || self.check.r_levels == 0 || !(self.check.regularity_tol >= 0.0) {
            return bad("check settings must be positive");
        }
        let q = &self.perturb;
        if !(q.top > 0.0) || q.rungs == 0 || q.per_level == 0 || q.pieces == 0 {
            return bad("perturb settings must be positive");
        }
        Ok(())
    }

    /// Builds system, constraint and target and checks that they fit together.
    pub fn build(&self) -> Result<Built> {
        let system = self.system.build()?;
        let constraint = self.constraint.build()?;
        let target = self.target.build()?;
        if constraint.dim() != system.dim || target.dim() != system.dim {
            return Err(Error::Scenario(format!(
                "dimension mismatch: system {}, constraint {}, target {}",
                system.dim,
                constraint.dim(),
                target.dim()
            )));
        }
        if !target_inside(&constraint, &target) {
            return Err(Error::Scenario("target must lie in the interior of the constraint set".into()));
        }
        Ok(Built { system, constraint, target })
    }

    pub fn synthesis_config(&self) -> SynthesisConfig {
        let y = &self.synthesis;
        SynthesisConfig {
            delta: self.delta,
            gamma: self.gamma(),
            boundary: BoundaryConfig { seed: self.seed, ..y.boundary.clone() },
            tube: y.tube.clone(),
            tube_eps_factor: y.tube_eps_factor,
            dwell: self.planner.dwell,
            plan_horizon: self.planner.horizon,
            node_budget: self.planner.node_budget,
            tube_substeps: self.planner.substeps,
            coverage_h: y.coverage_h,
            coverage_margin: y.coverage_margin,
            max_seeds: y.max_seeds,
        }
    }

    /// Inclusive lattice over the bounding box of `S`, kept if inside `S` and outside `Σ^δ`.
    pub fn initial_grid(&self, b: &Built) -> Vec<Point> {
        let (lo, hi) = b.constraint.bounding_box();
        let n = self.simulation.grid;
        let d = lo.len();
        let coord = |k: usize, i: usize| {
            if n == 1 {
                0.5 * (lo[k] + hi[k])
            } else {
                lo[k] + (hi[k] - lo[k]) * i as f64 / (n - 1) as f64
            }
        };
        let total = n.pow(d as u32);
        let mut out = Vec::new();
        for mut idx in 0..total {
            let mut x = Vec::with_capacity(d);
            for k in 0..d {
                x.push(coord(k, idx % n));
                idx /= n;
            }
            if b.constraint.signed_distance(&x) <= 0.0 && b.target.distance(&x) > self.delta {
                out.push(x);
            }
        }
        out
    }
}

fn target_inside(s: &SetRep, t: &SetRep) -> bool {
    match t {
        SetRep::Ball { center, radius } => s.signed_distance(center) < -radius,
        SetRep::Polytope(p) => p.vertices().iter().all(|v| s.signed_distance(v) < 0.0),
        SetRep::Oracle(_) => false,
    }
}

/// The canonical square scenario.
pub fn square() -> Scenario {
    Scenario::from_toml(include_str!("../../../scenarios/square.toml")).expect("bundled scenario")
}

/// Linear-stable dynamics on the unit disk.
pub fn disk() -> Scenario {
    Scenario::from_toml(include_str!("../../../scenarios/disk.toml")).expect("bundled scenario")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let sc = Scenario::from_toml(
            "[constraint]\nkind = \"box\"\nlo = [-1.0, -1.0]\nhi = [1.0, 1.0]\n[target]\nkind = \"point\"\ncenter = [0.0, 0.0]\n",
        )
        .unwrap();
        assert_eq!(sc.delta, 0.2);
        assert_eq!(sc.gamma(), 0.05);
        assert_eq!(sc.system.directions, 16);
        let b = sc.build().unwrap();
        assert_eq!(b.system.controls.len(), 17);
    }

    #[test]
    fn rejects_bad_gamma_and_unknown_keys() {
        let base = "[constraint]\nkind = \"box\"\nlo = [-1.0, -1.0]\nhi = [1.0, 1.0]\n[target]\nkind = \"point\"\ncenter = [0.0, 0.0]\n";
        assert!(Scenario::from_toml(&format!("gamma = 0.1\n{base}")).is_err());
        assert!(Scenario::from_toml(&format!("bogus = 1\n{base}")).is_err());
    }

    #[test]
    fn target_outside_rejected() {
        let mut sc = square();
        sc.target = SetSpec::Point { center: vec![2.0, 0.0] };
        assert!(sc.build().is_err());
    }

    #[test]
    fn toml_roundtrip() {
        let sc = square();
        assert_eq!(Scenario::from_toml(&sc.to_toml()).unwrap(), sc);
    }

    #[test]
    fn grid_excludes_target_band() {
        let sc = square();
        let b = sc.build().unwrap();
        let g = sc.initial_grid(&b);
        // 10×10 inclusive lattice; the four points nearest the origin are at distance ≈ 0.157
        assert_eq!(g.len(), 96);
    }
}
