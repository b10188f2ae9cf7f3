//! Closed-loop integration with switch detection, robustness harness and run checks.

mod perturb;
mod verify;

pub use perturb::{perturbation_norms, simulate_perturbed, PerturbSpec, Perturbation, PiecewiseConstant};
pub use verify::{runs_csv, signed_distance_decrease_probe, verify_stabilization, DecreaseReport, RunVerdict, StabilizationSummary};

use serde::{Deserialize, Serialize};

use crate::dynamics::ControlSystem;
use crate::geometry::SetRep;
use crate::linalg::{add, axpy};
use crate::synthesis::{alpha_star, PatchyFeedback};
use crate::{Error, Point, Result};

/// Stop condition `d(x, Σ) ≤ δ`.
#[derive(Clone, Debug)]
pub struct Goal {
    pub target: SetRep,
    pub delta: f64,
}

impl Goal {
    pub fn reached(&self, x: &[f64]) -> bool {
        self.target.distance(x) <= self.delta
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Reached,
    LeftDomain,
    BudgetExceeded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Switch {
    pub t: f64,
    pub from: usize,
    /// `None` when the run leaves `D`.
    pub to: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClosedLoopRun {
    pub times: Vec<f64>,
    pub states: Vec<Point>,
    /// Active patch at each state (`None` outside `D`).
    pub patches: Vec<Option<usize>>,
    pub switches: Vec<Switch>,
    pub status: RunStatus,
    /// `min_k -Δ_S(x_k)`; negative means the run left `S`.
    pub min_clearance: f64,
    /// A switch to a lower index survived every refinement.
    pub decreasing_switch: bool,
}

impl ClosedLoopRun {
    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("nonempty run")
    }
}

/// Piecewise-constant inputs of the event loop on one step.
pub(crate) struct Inputs<'a> {
    pub zeta: &'a [f64],
    pub d: &'a [f64],
}

fn is_zero(v: &[f64]) -> bool {
    v.iter().all(|&a| a == 0.0)
}

/// `α*` seen through the measurement `y + ζ`.
fn observed(fb: &PatchyFeedback, y: &[f64], zeta: &[f64]) -> Option<usize> {
    if is_zero(zeta) {
        alpha_star(fb, y)
    } else {
        alpha_star(fb, &add(y, zeta))
    }
}

/// RK4 step of `f(y, u) + d`.
fn step(sys: &ControlSystem, y: &[f64], u: &[f64], d: &[f64], h: f64) -> Point {
    if is_zero(d) {
        return crate::dynamics::rk4_step(sys, y, u, h);
    }
    let g = |p: &[f64]| add(&sys.eval(p, u), d);
    let k1 = g(y);
    let k2 = g(&axpy(y, h / 2.0, &k1));
    let k3 = g(&axpy(y, h / 2.0, &k2));
    let k4 = g(&axpy(y, h, &k3));
    y.iter().enumerate().map(|(i, yi)| yi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

/// Smallest `τ ∈ (lo, h]` (to within `tol`) where the observed index stops being `a`,
/// given that it is still `a` at `lo`.
#[allow(clippy::too_many_arguments)]
fn first_change(
    sys: &ControlSystem,
    fb: &PatchyFeedback,
    y: &[f64],
    u: &[f64],
    inp: &Inputs,
    a: usize,
    (mut lo, h): (f64, f64),
    tol: f64,
) -> (f64, Point, Option<usize>) {
    let mut hi = h;
    let mut y_hi = step(sys, y, u, inp.d, h);
    let mut a_hi = observed(fb, &y_hi, inp.zeta);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let y_mid = step(sys, y, u, inp.d, mid);
        let a_mid = observed(fb, &y_mid, inp.zeta);
        if a_mid == Some(a) {
            lo = mid;
        } else {
            hi = mid;
            y_hi = y_mid;
            a_hi = a_mid;
        }
    }
    (hi, y_hi, a_hi)
}

/// Event loop shared by the nominal and perturbed simulators. `inputs(t)` returns the
/// current `(ζ, d)` and the end of the piece they are constant on.
pub(crate) fn run_loop<'p>(
    sys: &ControlSystem,
    fb: &PatchyFeedback,
    x0: &[f64],
    dt: f64,
    t_max: f64,
    goal: Option<&Goal>,
    inputs: impl Fn(f64) -> (Inputs<'p>, f64),
) -> Result<ClosedLoopRun> {
    if !(dt > 0.0) || !(t_max >= 0.0) {
        return Err(Error::Precondition("dt must be positive and T_max nonnegative".into()));
    }
    let tol = dt * 1e-3;
    let fine = dt * 1e-7;
    let s = &fb.constraint;
    let mut run = ClosedLoopRun {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        patches: Vec::new(),
        switches: Vec::new(),
        status: RunStatus::BudgetExceeded,
        min_clearance: -s.signed_distance(x0),
        decreasing_switch: false,
    };
    let mut t = 0.0;
    let mut y = x0.to_vec();
    let max_events = fb.len() + 10 * ((t_max / dt).ceil() as usize + 1);
    let mut events = 0;
    loop {
        let (inp, piece_end) = inputs(t);
        let a = observed(fb, &y, inp.zeta);
        run.patches.push(a);
        if goal.is_some_and(|g| g.reached(&y)) {
            run.status = RunStatus::Reached;
            break;
        }
        let Some(a) = a else {
            run.status = RunStatus::LeftDomain;
            break;
        };
        if t >= t_max || events >= max_events {
            break;
        }
        events += 1;
        let u = &fb.patches[a].control_value;
        let h = dt.min(t_max - t).min(piece_end - t).max(tol.min(t_max - t));
        let y1 = step(sys, &y, u, inp.d, h);
        let a1 = observed(fb, &y1, inp.zeta);
        let (tau, y_next, a_next) = if a1 == Some(a) {
            (h, y1, a1)
        } else {
            let mut found = first_change(sys, fb, &y, u, &inp, a, (0.0, h), tol);
            // a crossing past the first coarse cell is located tightly; an immediate
            // re-switch (chattering) keeps the coarse minimum advance
            if found.0 > tol {
                found = first_change(sys, fb, &y, u, &inp, a, (found.0 - tol, found.0), fine);
            }
            // unperturbed, a drop in index can only be a discretisation artefact; refine before
            // flagging. Under ζ or d drops are real and refining them only costs time.
            let nominal = is_zero(inp.zeta) && is_zero(inp.d);
            let mut refine = 0;
            while nominal && found.2.is_some_and(|b| b < a) && refine < 10 {
                refine += 1;
                found = first_change(sys, fb, &y, u, &inp, a, (0.0, h), fine / 2f64.powi(refine));
            }
            if found.2.is_some_and(|b| b < a) {
                run.decreasing_switch = true;
            }
            found
        };
        t += tau;
        if a_next != Some(a) {
            run.switches.push(Switch { t, from: a, to: a_next });
        }
        run.min_clearance = run.min_clearance.min(-s.signed_distance(&y_next));
        y = y_next;
        run.times.push(t);
        run.states.push(y.clone());
    }
    // leaving D inside the excluded ball around Σ counts as arrival
    if run.status == RunStatus::LeftDomain && goal.is_some_and(|g| g.reached(&y)) {
        run.status = RunStatus::Reached;
    }
    Ok(run)
}

/// Closed loop `ẋ = f(x, U(x))` from `x0`, stopping on `Σ^δ` (if a goal is given), on
/// leaving `D`, or at `T_max`.
pub fn integrate_closed_loop(
    sys: &ControlSystem,
    fb: &PatchyFeedback,
    x0: &[f64],
    dt: f64,
    t_max: f64,
    goal: Option<&Goal>,
) -> Result<ClosedLoopRun> {
    let zero = vec![0.0; x0.len()];
    run_loop(sys, fb, x0, dt, t_max, goal, |_| (Inputs { zeta: &zero, d: &zero }, f64::INFINITY))
}

/// Indices strictly increase along the switch log and there are at most `n_patches` switches.
pub fn check_monotone_switching(run: &ClosedLoopRun, n_patches: usize) -> bool {
    !run.decreasing_switch
        && run.switches.len() <= n_patches
        && run.switches.iter().all(|s| s.to.is_none_or(|b| b > s.from))
        && run.switches.windows(2).all(|w| w[0].from < w[1].from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{boundary_patch, BoundaryConfig, Patch, PatchDomain, PatchTag};

    fn ball(c: [f64; 2], r: f64, u: [f64; 2]) -> Patch {
        Patch {
            domain: PatchDomain::Ball { center: c.to_vec(), radius: r },
            control: 0,
            control_value: u.to_vec(),
            tag: PatchTag::Plain,
        }
    }

    fn setup() -> (ControlSystem, PatchyFeedback, Goal) {
        let sys = ControlSystem::single_integrator(4, 0.0, true);
        let fb = PatchyFeedback::new(
            "si",
            SetRep::square(1.0),
            vec![ball([0.0, 0.0], 3.0, [-1.0, 0.0]), ball([-0.5, 0.3], 0.5, [0.0, 1.0])],
            None,
        );
        (sys, fb, Goal { target: SetRep::point(vec![-0.1, 0.5]), delta: 0.05 })
    }

    #[test]
    fn switch_is_located_and_logged() {
        let (sys, fb, goal) = setup();
        let run = integrate_closed_loop(&sys, &fb, &[0.5, 0.0], 0.1, 5.0, Some(&goal)).unwrap();
        assert_eq!(run.status, RunStatus::Reached);
        assert_eq!(run.switches.len(), 1);
        let sw = &run.switches[0];
        assert_eq!((sw.from, sw.to), (0, Some(1)));
        // enters the second ball at x = -0.1 after 0.6 time units
        assert!((sw.t - 0.6).abs() <= 0.1 * 1e-3 + 1e-12);
        assert!(check_monotone_switching(&run, fb.len()));
        let end = run.last();
        assert!((end[0] + 0.1).abs() < 1e-3 && (end[1] - 0.45).abs() < 0.1 + 1e-9);
    }

    #[test]
    fn halving_dt_keeps_switch_time() {
        let (sys, fb, goal) = setup();
        let a = integrate_closed_loop(&sys, &fb, &[0.5, 0.0], 0.1, 5.0, Some(&goal)).unwrap();
        let b = integrate_closed_loop(&sys, &fb, &[0.5, 0.0], 0.05, 5.0, Some(&goal)).unwrap();
        assert!((a.switches[0].t - b.switches[0].t).abs() <= 2.0 * 0.1 * 1e-3);
    }

    #[test]
    fn start_in_goal_stops_at_zero() {
        let (sys, fb, goal) = setup();
        let run = integrate_closed_loop(&sys, &fb, &[-0.1, 0.5], 0.1, 5.0, Some(&goal)).unwrap();
        assert_eq!(run.status, RunStatus::Reached);
        assert_eq!(run.end_time(), 0.0);
        assert_eq!(run.states.len(), 1);
    }

    #[test]
    fn leaving_domain_and_budget() {
        let (sys, _, goal) = setup();
        let fb = PatchyFeedback::new("si", SetRep::square(1.0), vec![ball([0.0, 0.0], 0.5, [1.0, 0.0])], None);
        let run = integrate_closed_loop(&sys, &fb, &[0.0, 0.0], 0.1, 5.0, Some(&goal)).unwrap();
        assert_eq!(run.status, RunStatus::LeftDomain);
        assert_eq!(run.switches.last().unwrap().to, None);
        let (sys, fb, _) = setup();
        let run = integrate_closed_loop(&sys, &fb, &[0.5, 0.0], 0.1, 0.1, None).unwrap();
        assert_eq!(run.status, RunStatus::BudgetExceeded);
    }

    #[test]
    fn monotone_examples() {
        let mk = |log: &[(usize, usize)]| ClosedLoopRun {
            times: vec![0.0],
            states: vec![vec![0.0]],
            patches: vec![],
            switches: log.iter().enumerate().map(|(i, &(a, b))| Switch { t: i as f64, from: a, to: Some(b) }).collect(),
            status: RunStatus::Reached,
            min_clearance: 0.0,
            decreasing_switch: false,
        };
        assert!(check_monotone_switching(&mk(&[(1, 3), (3, 7)]), 10));
        assert!(!check_monotone_switching(&mk(&[(1, 3), (3, 2)]), 10));
        assert!(check_monotone_switching(&mk(&[]), 10));
        assert!(!check_monotone_switching(&mk(&[(1, 3), (3, 7)]), 1));
    }

    #[test]
    fn zero_perturbation_is_bitwise_nominal() {
        let (sys, fb, goal) = setup();
        let nominal = integrate_closed_loop(&sys, &fb, &[0.5, -0.2], 0.1, 5.0, Some(&goal)).unwrap();
        let zero = PiecewiseConstant::new(vec![0.0, 0.7, 5.0], vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        for pert in [Perturbation::zero(), Perturbation { zeta: zero.clone(), d: zero }] {
            let p = simulate_perturbed(&sys, &fb, &[0.5, -0.2], &pert, 0.1, 5.0, Some(&goal)).unwrap();
            assert_eq!(p.times.len(), nominal.times.len());
            for (a, b) in p.states.iter().flatten().zip(nominal.states.iter().flatten()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            assert_eq!(p.switches, nominal.switches);
        }
    }

    #[test]
    fn strong_outward_disturbance_fails() {
        let (sys, fb, goal) = setup();
        let d = PiecewiseConstant::new(vec![0.0, 5.0], vec![vec![10.0, 0.0]]).unwrap();
        let pert = Perturbation { zeta: PiecewiseConstant::zero(), d };
        let run = simulate_perturbed(&sys, &fb, &[0.5, 0.0], &pert, 0.1, 5.0, Some(&goal)).unwrap();
        let summary = verify_stabilization(&[run], &fb.constraint, &goal.target, goal.delta, 1e-6);
        assert_eq!(summary.passed, 0);
        assert!(summary.worst_violation > 0.0);
    }

    #[test]
    fn decrease_probe_examples() {
        let sys = ControlSystem::single_integrator(16, 0.0, true);
        let s = SetRep::square(1.0);
        let (p, par) = boundary_patch(&sys, &s, &[1.0, 0.0], 1.0, 1.0, &BoundaryConfig::default()).unwrap();
        let fb = PatchyFeedback::new("si", s.clone(), vec![p.clone()], None);
        let run = integrate_closed_loop(&sys, &fb, &[0.9999, 0.0], 1e-3, 0.5, None).unwrap();
        let rep = signed_distance_decrease_probe(&run, &s, &fb, par.alpha, 1.0, 0.05);
        assert!(rep.steps_checked > 0);
        assert!((rep.worst_rate.unwrap() + 1.0).abs() < 1e-9);
        assert!(rep.pass);

        let inside = integrate_closed_loop(&sys, &fb, &[0.9999, 0.0], 1e-3, 0.0, None).unwrap();
        assert!(signed_distance_decrease_probe(&inside, &s, &fb, par.alpha, 1.0, 0.05).pass);

        let mut bad = p;
        bad.control_value = vec![1.0, 0.0];
        let fb = PatchyFeedback::new("si", s.clone(), vec![bad], None);
        let run = integrate_closed_loop(&sys, &fb, &[0.99, 0.0], 1e-3, 0.5, None).unwrap();
        let rep = signed_distance_decrease_probe(&run, &s, &fb, 0.5, 1.0, 0.05);
        assert!(rep.worst_rate.unwrap() > 0.0 && !rep.pass);
    }

    #[test]
    fn verification_examples() {
        let (sys, fb, goal) = setup();
        let ok = integrate_closed_loop(&sys, &fb, &[0.5, 0.0], 0.1, 5.0, Some(&goal)).unwrap();
        let sum = verify_stabilization(&[ok.clone(), ok.clone()], &fb.constraint, &goal.target, goal.delta, 1e-6);
        assert!(sum.all_pass());
        let mut out = ok;
        out.states[1] = vec![1.001, 0.0];
        let sum = verify_stabilization(&[out], &fb.constraint, &goal.target, goal.delta, 1e-6);
        assert!(!sum.runs[0].pass);
        assert!((sum.runs[0].violation - 1e-3).abs() < 1e-12);
        let empty = verify_stabilization(&[], &fb.constraint, &goal.target, goal.delta, 1e-6);
        assert_eq!((empty.total, empty.passed, empty.max_reach_time), (0, 0, None));
        assert!(runs_csv(&[]).starts_with("run,t"));
    }
}
