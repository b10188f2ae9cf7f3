//! The check / synthesize / simulate / perturb commands as library calls.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraint::{check_hypotheses_on, r_grid, HypothesisReport};
use crate::dynamics::{verify_regularity, RegularityReport};
use crate::scenario::{Built, Scenario};
use crate::simulator::{
    check_monotone_switching, integrate_closed_loop, perturbation_norms, signed_distance_decrease_probe, simulate_perturbed,
    verify_stabilization, ClosedLoopRun, Goal, PerturbSpec, Perturbation, StabilizationSummary,
};
use crate::synthesis::{self, AssemblyParams, PatchyFeedback, Synthesis, SynthesisReport};
use crate::{Error, Point, Result};

/// Finite-difference slack of the crown decrease probe.
pub const DECREASE_TOL: f64 = 0.05;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub hypotheses: HypothesisReport,
    pub regularity: RegularityReport,
    pub regularity_ok: bool,
    pub pass: bool,
}

pub fn check(sc: &Scenario, b: &Built) -> CheckOutcome {
    let grid = r_grid(&b.constraint, sc.check.r_levels);
    let hypotheses = check_hypotheses_on(&b.system, &b.constraint, sc.check.n_boundary, &sc.check.certificate, &grid);
    let regularity = verify_regularity(&b.system, sc.check.regularity_pairs, &b.constraint, sc.seed);
    let slack = 1.0 + sc.check.regularity_tol;
    let regularity_ok = regularity.lipschitz_ratio <= b.system.lipschitz * slack + 1e-12
        && regularity.growth_ratio <= b.system.growth * slack + 1e-12;
    let pass = hypotheses.s1_ok && hypotheses.s2_ok && regularity_ok;
    CheckOutcome { hypotheses, regularity, regularity_ok, pass }
}

/// Contents of `feedback.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeedbackFile {
    pub scenario: String,
    pub seed: u64,
    pub params: AssemblyParams,
    pub report: SynthesisReport,
    pub feedback: PatchyFeedback,
}

impl FeedbackFile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: FeedbackFile = serde_json::from_str(text)?;
        let fb = f.feedback;
        Ok(Self { feedback: PatchyFeedback::new(fb.system, fb.constraint, fb.patches, fb.excluded), ..f })
    }

    /// The feedback was built for this scenario's system.
    pub fn matches(&self, b: &Built) -> Result<()> {
        if self.feedback.system != b.system.name || self.feedback.constraint.dim() != b.system.dim {
            return Err(Error::Scenario(format!(
                "feedback built for '{}' does not match system '{}'",
                self.feedback.system, b.system.name
            )));
        }
        Ok(())
    }
}

pub fn synthesize(sc: &Scenario, b: &Built) -> Result<(FeedbackFile, Synthesis)> {
    let syn = synthesis::synthesize(&b.system, &b.constraint, &b.target, &sc.synthesis_config())?;
    let file = FeedbackFile {
        scenario: sc.name.clone(),
        seed: sc.seed,
        params: syn.params.clone(),
        report: syn.report.clone(),
        feedback: syn.feedback.clone(),
    };
    Ok((file, syn))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub scenario: String,
    pub dt: f64,
    pub t_max: f64,
    pub stabilization: StabilizationSummary,
    pub monotone_ok: bool,
    pub max_switches: usize,
    pub total_patches: usize,
    /// Worst crown rate of `Δ_S` over all runs that entered the crown.
    pub worst_crown_rate: Option<f64>,
    pub crown_bound: f64,
    pub decrease_ok: bool,
    pub pass: bool,
}

/// Closed-loop runs from `starts`, in input order.
pub fn run_all(b: &Built, fb: &PatchyFeedback, starts: &[Point], dt: f64, t_max: f64, delta: f64) -> Result<Vec<ClosedLoopRun>> {
    let goal = Goal { target: b.target.clone(), delta };
    starts.par_iter().map(|x0| integrate_closed_loop(&b.system, fb, x0, dt, t_max, Some(&goal))).collect()
}

pub fn simulate(sc: &Scenario, b: &Built, file: &FeedbackFile, dt: f64) -> Result<(Vec<ClosedLoopRun>, SimulationSummary)> {
    let fb = &file.feedback;
    let t_max = sc.simulation.t_max;
    let runs = run_all(b, fb, &sc.initial_grid(b), dt, t_max, sc.delta)?;
    let stabilization = verify_stabilization(&runs, &b.constraint, &b.target, sc.delta, sc.simulation.tol_bd);
    let n = fb.len();
    let monotone_ok = runs.iter().all(|r| check_monotone_switching(r, n));
    let max_switches = runs.iter().map(|r| r.switches.len()).max().unwrap_or(0);
    let eps_dec = file.params.mu;
    let probes: Vec<_> = runs
        .iter()
        .map(|r| signed_distance_decrease_probe(r, &b.constraint, fb, file.params.r_tilde, eps_dec, DECREASE_TOL))
        .collect();
    let worst_crown_rate = probes.iter().filter_map(|p| p.worst_rate).reduce(f64::max);
    let decrease_ok = probes.iter().all(|p| p.pass);
    let pass = stabilization.all_pass() && monotone_ok && decrease_ok;
    let summary = SimulationSummary {
        scenario: sc.name.clone(),
        dt,
        t_max,
        stabilization,
        monotone_ok,
        max_switches,
        total_patches: n,
        worst_crown_rate,
        crown_bound: -eps_dec / 2.0 + DECREASE_TOL,
        decrease_ok,
        pass,
    };
    Ok((runs, summary))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelResult {
    pub level: f64,
    pub runs: usize,
    pub passed: usize,
    /// Largest `‖ζ‖_BV` and `‖d‖_L1` actually drawn at this level.
    pub max_bv: f64,
    pub max_l1: f64,
    pub all_pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LadderReport {
    pub scenario: String,
    pub dt: f64,
    /// Time span the perturbation pieces are spread over.
    pub horizon: f64,
    pub levels: Vec<LevelResult>,
    /// Largest level at which it and every smaller level pass.
    pub chi_hat: Option<f64>,
    /// The all-pass pattern is downward closed.
    pub monotone: bool,
}

/// Geometric ladder `top, top/2, …` of seeded perturbations applied to every grid start.
pub fn perturb_ladder(sc: &Scenario, b: &Built, file: &FeedbackFile, dt: f64) -> Result<LadderReport> {
    let fb = &file.feedback;
    let t_max = sc.simulation.t_max;
    let starts = sc.initial_grid(b);
    // spread the perturbation over the nominal time to reach Σ^δ
    let nominal = run_all(b, fb, &starts, dt, t_max, sc.delta)?;
    let horizon = nominal.iter().map(ClosedLoopRun::end_time).fold(0.0, f64::max).max(dt);
    let goal = Goal { target: b.target.clone(), delta: sc.delta };
    let p = &sc.perturb;
    let mut levels = Vec::new();
    for rung in 0..p.rungs {
        let level = p.top * 0.5f64.powi(rung as i32);
        let spec = PerturbSpec { level, pieces: p.pieces, horizon };
        let perts: Vec<Perturbation> =
            (0..p.per_level).map(|k| Perturbation::generate(&spec, b.system.dim, mix(sc.seed, rung as u64, k as u64))).collect();
        let (max_bv, max_l1) =
            perts.iter().map(perturbation_norms).fold((0.0f64, 0.0f64), |(a, c), (bv, l1)| (a.max(bv), c.max(l1)));
        let jobs: Vec<(&Perturbation, &Point)> = perts.iter().flat_map(|q| starts.iter().map(move |x| (q, x))).collect();
        let runs: Vec<ClosedLoopRun> = jobs
            .par_iter()
            .map(|(q, x0)| simulate_perturbed(&b.system, fb, x0, q, dt, t_max, Some(&goal)))
            .collect::<Result<_>>()?;
        let st = verify_stabilization(&runs, &b.constraint, &b.target, sc.delta, sc.simulation.tol_bd);
        levels.push(LevelResult { level, runs: st.total, passed: st.passed, max_bv, max_l1, all_pass: st.all_pass() });
    }
    Ok(ladder_report(sc, dt, horizon, levels))
}

fn ladder_report(sc: &Scenario, dt: f64, horizon: f64, levels: Vec<LevelResult>) -> LadderReport {
    // levels run from large to small
    let mut chi_hat = None;
    for l in levels.iter().rev() {
        if !l.all_pass {
            break;
        }
        chi_hat = Some(l.level);
    }
    let first_pass = levels.iter().position(|l| l.all_pass);
    let monotone = first_pass.is_none_or(|i| levels[i..].iter().all(|l| l.all_pass));
    LadderReport { scenario: sc.name.clone(), dt, horizon, levels, chi_hat, monotone }
}

/// Per-perturbation seed.
fn mix(seed: u64, rung: u64, k: u64) -> u64 {
    let mut z = seed ^ rung.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ k.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
