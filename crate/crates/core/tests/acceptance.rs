//! End-to-end acceptance run on the canonical square and the linear-stable disk.
//!
//! `cargo test --release --test acceptance -- --nocapture` prints one line per criterion.

use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use patchy::dynamics::{ControlSystem, DomainTag};
use patchy::geometry::SetRep;
use patchy::linalg::dist;
use patchy::pipeline::{self, FeedbackFile, DECREASE_TOL};
use patchy::planner::{oracle_bfs, plan_constrained, PlanRequest};
use patchy::scenario::{self, Built, Scenario};
use patchy::simulator::{
    check_monotone_switching, integrate_closed_loop, signed_distance_decrease_probe, simulate_perturbed, verify_stabilization,
    ClosedLoopRun, Perturbation, PiecewiseConstant, RunStatus,
};
use patchy::synthesis::{check_inward_sampled, crown_samples, PatchyFeedback, Synthesis, TubeFamily};
use patchy::Point;

struct Verdicts(Vec<(usize, bool, String)>);

impl Verdicts {
    fn record(&mut self, id: usize, pass: bool, detail: String) {
        println!("[{}] criterion {id:>2}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.0.push((id, pass, detail));
    }
}

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_patchy"))
}

fn hypotheses(v: &mut Verdicts) {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["square.toml", "disk.toml"] {
        let t = Instant::now();
        let out = bin().args(["check", "--scenario"]).arg(scenario_path(name)).output().unwrap();
        let secs = t.elapsed().as_secs_f64();
        let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        let margin = report["hypotheses"]["s2_margin"].as_f64().unwrap();
        let n = report["hypotheses"]["n_boundary"].as_u64().unwrap();
        let code = out.status.code();
        ok &= code == Some(0) && secs < 5.0 && n == 256;
        if name == "square.toml" {
            ok &= margin <= -0.9;
        }
        parts.push(format!("{name} exit {code:?} in {secs:.2}s, s2_margin {margin:.4} at {n} samples"));
    }
    v.record(1, ok, parts.join("; "));
}

fn invariance_and_reach(v: &mut Verdicts, sc: &Scenario, b: &Built, file: &FeedbackFile) -> Vec<ClosedLoopRun> {
    let t = Instant::now();
    let starts = sc.initial_grid(b);
    let runs = pipeline::run_all(b, &file.feedback, &starts, sc.simulation.dt, 20.0, sc.delta).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let st = verify_stabilization(&runs, &b.constraint, &b.target, sc.delta, 1e-6);
    let within_t = runs.iter().all(|r| r.end_time() <= 20.0);
    let ok = st.all_pass() && within_t && secs < 60.0 && st.total == starts.len();
    v.record(
        2,
        ok,
        format!(
            "{}/{} runs stay in S (worst Δ_S {:.2e}) and reach Σ^δ, max reach time {:.3}, batch {secs:.2}s",
            st.passed,
            st.total,
            st.worst_violation,
            st.max_reach_time.unwrap_or(f64::NAN)
        ),
    );
    runs
}

fn monotone(v: &mut Verdicts, runs: &[ClosedLoopRun], n: usize) {
    let bad = runs.iter().filter(|r| !check_monotone_switching(r, n)).count();
    let most = runs.iter().map(|r| r.switches.len()).max().unwrap_or(0);
    v.record(3, bad == 0 && most <= n, format!("{bad} non-monotone runs of {}, max switches {most} <= {n} patches", runs.len()));
}

fn inward(v: &mut Verdicts, sys: &ControlSystem, s: &SetRep, syn: &Synthesis) {
    let rep = check_inward_sampled(sys, &syn.feedback, 200);
    let strict = rep.per_patch.iter().flatten().all(|&m| m < 0.0);
    let layer = syn.boundary.as_feedback(sys, s);
    let mu = syn.params.mu;
    let crown = crown_samples(s, syn.params.r_tilde, 1000, 11);
    let mut cone_fail = 0;
    for x in &crown {
        let ok = layer.top_patch(x).is_some_and(|a| {
            let vel = sys.eval(x, &layer.patches[a].control_value);
            let inner = s.inner_approximation(s.clearance(x)).unwrap();
            inner.tangent_cone_contains(x, &vel, mu).unwrap_or(false)
        });
        cone_fail += !ok as usize;
    }
    v.record(
        4,
        rep.pass && strict && cone_fail == 0,
        format!(
            "worst effective-boundary dot {:.3e} over {} samples; crown cone inclusion with margin μ={mu:.4} fails at {cone_fail}/{}",
            rep.worst,
            rep.samples_checked,
            crown.len()
        ),
    );
}

/// Reference position at time `t`, linear between stored samples.
fn reference_at(fam: &TubeFamily, t: f64) -> Point {
    let ts = &fam.times;
    let k = ts.partition_point(|&s| s <= t);
    if k == 0 {
        return fam.states[0].clone();
    }
    if k >= ts.len() {
        return fam.states[ts.len() - 1].clone();
    }
    let w = (t - ts[k - 1]) / (ts[k] - ts[k - 1]);
    fam.states[k - 1].iter().zip(&fam.states[k]).map(|(a, b)| a + w * (b - a)).collect()
}

/// Time in `[t_a, t_b]` whose reference point is nearest to `y`.
fn nearest_time(fam: &TubeFamily, y: &[f64], t_a: f64, t_b: f64) -> f64 {
    let n = 400;
    (0..=n)
        .map(|i| t_a + (t_b - t_a) * i as f64 / n as f64)
        .min_by(|a, b| dist(&reference_at(fam, *a), y).total_cmp(&dist(&reference_at(fam, *b), y)))
        .unwrap()
}

fn tube_fidelity(v: &mut Verdicts, sys: &ControlSystem, s: &SetRep, syn: &Synthesis) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut runs, mut track_fail, mut exit_fail, mut worst) = (0, 0, 0, 0.0f64);
    for fam in syn.tubes.iter().filter(|f| !f.patches.is_empty()) {
        let fb = PatchyFeedback::new(sys.name.clone(), s.clone(), fam.patches.clone(), None);
        let first = &fam.patches[0].domain;
        let (lo, hi) = first.bounding_box();
        let t_end = *fam.times.last().unwrap();
        let seg_end = fam.plan.breakpoints.get(1).copied().unwrap_or(t_end);
        let x_end = fam.states.last().unwrap().clone();
        let mut drawn = 0;
        let mut tries = 0;
        while drawn < 50 && tries < 100_000 {
            tries += 1;
            let y0: Point = lo.iter().zip(&hi).map(|(a, b)| rng.gen_range(*a..=*b)).collect();
            if !first.contains(s, &y0) || fb.top_patch(&y0).is_none() {
                continue;
            }
            drawn += 1;
            let s0 = nearest_time(fam, &y0, 0.0, seg_end);
            let run = integrate_closed_loop(sys, &fb, &y0, 0.002, 2.0 * t_end + 1.0, None).unwrap();
            let dev = run
                .times
                .iter()
                .zip(&run.states)
                .map(|(t, y)| dist(y, &reference_at(fam, (t + s0).min(t_end))))
                .fold(0.0, f64::max);
            worst = worst.max(dev / fam.eps);
            track_fail += (dev > fam.eps + 1e-6) as usize;
            exit_fail += (run.status != RunStatus::LeftDomain || dist(run.last(), &x_end) > fam.eps + 1e-6) as usize;
        }
        runs += drawn;
    }
    v.record(
        5,
        track_fail == 0 && exit_fail == 0 && runs == 50 * syn.tubes.len(),
        format!(
            "{runs} starts over {} tubes: {track_fail} leave the ε-band of the shifted reference (worst {worst:.3}·ε), {exit_fail} end outside x(T)+εB",
            syn.tubes.len()
        ),
    );
}

fn decrease(v: &mut Verdicts, runs: &[ClosedLoopRun], s: &SetRep, file: &FeedbackFile) {
    let eps_dec = file.params.mu;
    let probes: Vec<_> = runs
        .iter()
        .map(|r| signed_distance_decrease_probe(r, s, &file.feedback, file.params.r_tilde, eps_dec, DECREASE_TOL))
        .collect();
    let entering: Vec<_> = probes.iter().filter(|p| p.steps_checked > 0).collect();
    let worst = entering.iter().filter_map(|p| p.worst_rate).fold(f64::NEG_INFINITY, f64::max);
    let bound = -eps_dec / 2.0 + DECREASE_TOL;
    let ok = !entering.is_empty() && probes.iter().all(|p| p.pass) && worst <= bound;
    v.record(6, ok, format!("{} runs enter the crown; worst rate {worst:.4} <= {bound:.4}", entering.len()));
}

fn planner_oracle(v: &mut Verdicts) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut agree, mut feasible) = (0, 0);
    let mut disagreements = Vec::new();
    for k in 0..20 {
        let controls: Vec<Point> = (0..5)
            .map(|_| {
                let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let r: f64 = rng.gen_range(0.3..1.0);
                vec![r * th.cos(), r * th.sin()]
            })
            .collect();
        let sys = if k % 2 == 0 {
            ControlSystem::new("single-integrator", 2, Arc::new(|_x, u| u.to_vec()), 0.0, 1.0, controls)
        } else {
            ControlSystem::new("linear-stable", 2, Arc::new(|x, u| vec![u[0] - x[0], u[1] - x[1]]), 1.0, 1.0, controls)
        };
        let s = SetRep::square(1.0);
        let depth = rng.gen_range(1..=6);
        let dwell = rng.gen_range(0.1..0.3);
        let start = vec![rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)];
        let target = SetRep::point(vec![rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)]);
        let gamma = rng.gen_range(0.05..0.3);
        let req = PlanRequest::new(start, 0.05, target, gamma, dwell, depth as f64 * dwell);
        let plan = plan_constrained(&sys, &s, &req).unwrap().is_some();
        let oracle = oracle_bfs(&sys, &s, &req, depth).unwrap();
        feasible += oracle as usize;
        if plan == oracle {
            agree += 1;
        } else {
            disagreements.push(k);
        }
    }
    v.record(7, agree == 20, format!("{agree}/20 instances agree ({feasible} feasible), disagreements at {disagreements:?}"));
}

fn extension(v: &mut Verdicts) {
    let s = SetRep::square(1.0);
    let neg = ControlSystem::new("neg", 2, Arc::new(|x, _u| vec![-x[0], -x[1]]), 1.0, 1.0, vec![vec![0.0, 0.0]]).restricted();
    assert_eq!(neg.domain, DomainTag::RestrictedToS);
    let grid_h = s.diameter() / 200.0;
    let ext = neg.extend_field(&s, grid_h).unwrap();
    let u = [0.0, 0.0];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ratio: f64 = 0.0;
    for _ in 0..10_000 {
        let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let y = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let (fx, fy) = (ext.eval(&x, &u), ext.eval(&y, &u));
        // the extension acts componentwise; each component is L_f-Lipschitz
        let r = (0..2).map(|i| (fx[i] - fy[i]).abs()).fold(0.0, f64::max) / dist(&x, &y);
        ratio = ratio.max(r);
    }
    let bound = 1.0 + 2.0 * grid_h;
    let n = (2.0 / grid_h).round() as usize;
    let mut exact = true;
    for i in 0..=n {
        for j in 0..=n {
            let y = [-1.0 + i as f64 * grid_h, -1.0 + j as f64 * grid_h];
            if s.signed_distance(&y) <= 0.0 {
                exact &= ext.eval(&y, &u) == neg.eval(&y, &u);
            }
        }
    }
    let f1 = ext.eval(&[2.0, 0.0], &u)[0];
    let ok = ratio <= bound && exact && f1.abs() <= 1e-2;
    v.record(8, ok, format!("Lipschitz ratio {ratio:.6} <= {bound:.6}; exact on grid: {exact}; f̃₁((2,0)) = {f1:.2e}"));
}

fn robustness(v: &mut Verdicts, sc: &Scenario, b: &Built, file: &FeedbackFile, nominal: &[ClosedLoopRun]) {
    let rep = pipeline::perturb_ladder(sc, b, file, sc.simulation.dt).unwrap();
    let chi = rep.chi_hat.unwrap_or(0.0);
    let norms_ok = rep.levels.iter().all(|l| l.max_bv < l.level && l.max_l1 < l.level);
    let fifty = rep.levels.iter().all(|l| l.runs == 50 * sc.initial_grid(b).len());
    // bitwise identity: the empty perturbation and one made of explicit zero pieces
    let zero_pieces = PiecewiseConstant::new(vec![0.0, 0.3, 0.9], vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
    let pieced = Perturbation { zeta: zero_pieces.clone(), d: zero_pieces };
    let goal = patchy::simulator::Goal { target: b.target.clone(), delta: sc.delta };
    let mut identical = true;
    for (x0, run) in sc.initial_grid(b).iter().zip(nominal) {
        for p in [Perturbation::zero(), pieced.clone()] {
            let r = simulate_perturbed(&b.system, &file.feedback, x0, &p, sc.simulation.dt, 20.0, Some(&goal)).unwrap();
            identical &= bits(&r.times) == bits(&run.times)
                && r.states.iter().zip(&run.states).all(|(a, c)| bits(a) == bits(c))
                && r.states.len() == run.states.len()
                && r.patches == run.patches
                && r.switches == run.switches;
        }
    }
    let table: Vec<String> = rep.levels.iter().map(|l| format!("{}:{}/{}", l.level, l.passed, l.runs)).collect();
    v.record(
        9,
        chi >= 0.01 && norms_ok && fifty && identical,
        format!("χ̂ = {chi} (ladder {}); norms below level: {norms_ok}; zero perturbation bitwise identical: {identical}", table.join(" ")),
    );
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn determinism(v: &mut Verdicts, in_process: &str) {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut bytes = Vec::new();
    for d in &dirs {
        let st = bin()
            .args(["synthesize", "--seed", "1", "--scenario"])
            .arg(scenario_path("square.toml"))
            .arg("--out")
            .arg(d.path())
            .output()
            .unwrap();
        assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
        bytes.push(std::fs::read(d.path().join("feedback.json")).unwrap());
    }
    let same = bytes[0] == bytes[1];
    let matches_lib = bytes[0] == in_process.as_bytes();
    v.record(10, same, format!("two CLI runs byte-identical: {same} ({} bytes); equal to the in-process synthesis: {matches_lib}", bytes[0].len()));
}

#[test]
fn acceptance() {
    let mut v = Verdicts(Vec::new());
    hypotheses(&mut v);

    let sc = scenario::square();
    let b = sc.build().unwrap();
    let t = Instant::now();
    let (file, syn) = pipeline::synthesize(&sc, &b).unwrap();
    println!(
        "synthesis: {} boundary patches, {} tube families, {} patches, r̃ = {:.5}, μ = {:.4}, {:.1}s",
        syn.report.boundary_patches,
        syn.report.tube_families,
        syn.report.total_patches,
        syn.params.r_tilde,
        syn.params.mu,
        t.elapsed().as_secs_f64()
    );
    let runs = invariance_and_reach(&mut v, &sc, &b, &file);
    monotone(&mut v, &runs, file.feedback.len());
    inward(&mut v, &b.system, &b.constraint, &syn);
    tube_fidelity(&mut v, &b.system, &b.constraint, &syn);
    decrease(&mut v, &runs, &b.constraint, &file);
    planner_oracle(&mut v);
    extension(&mut v);
    robustness(&mut v, &sc, &b, &file, &runs);
    determinism(&mut v, &(file.to_json().unwrap() + "\n"));

    let failed: Vec<usize> = v.0.iter().filter(|c| !c.1).map(|c| c.0).collect();
    println!("{} of {} criteria pass", v.0.len() - failed.len(), v.0.len());
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
