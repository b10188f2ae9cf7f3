//! Property tests for the geometric, dynamical, planning and simulation invariants.

use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use patchy::constraint::crown_contains;
use patchy::dynamics::{integrate_open_loop, ControlSystem};
use patchy::geometry::{lower_wedge_boundary, Halfspace, Polytope, SetRep, Wedge};
use patchy::linalg::{dist, dot};
use patchy::planner::{oracle_bfs, plan_constrained, verify_plan_margin, PlanRequest};
use patchy::scenario;
use patchy::simulator::{integrate_closed_loop, perturbation_norms, simulate_perturbed, PerturbSpec, Perturbation};
use patchy::synthesis::{Patch, PatchDomain, PatchTag, PatchyFeedback};
use patchy::Point;

/// Convex polygon with `n` vertices on an ellipse, rotated by `rot`.
fn polygon(n: usize, a: f64, b: f64, rot: f64) -> SetRep {
    let faces = (0..n)
        .map(|k| {
            let th = rot + std::f64::consts::TAU * (k as f64 + 0.5) / n as f64;
            let normal = vec![th.cos() / a, th.sin() / b];
            Halfspace { normal, offset: 1.0 }
        })
        .collect();
    SetRep::Polytope(Polytope::new(faces).unwrap())
}

fn polygons() -> impl Strategy<Value = SetRep> {
    (3usize..9, 0.5f64..2.0, 0.5f64..2.0, 0.0f64..1.0).prop_map(|(n, a, b, r)| polygon(n, a, b, r))
}

fn unit(th: f64) -> Point {
    vec![th.cos(), th.sin()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tangent_cone_is_polar_of_normal_cone(s in polygons(), k in 0usize..64, th in 0.0f64..std::f64::consts::TAU) {
        let bd = s.sample_boundary(64);
        let x = &bd[k % bd.len()];
        let v = unit(th);
        let cone = s.normal_cone(x).unwrap();
        let dots: Vec<f64> = cone.generators.iter().map(|p| dot(p, &v)).collect();
        prop_assume!(dots.iter().all(|d| d.abs() > 1e-9));
        let polar = dots.iter().all(|&d| d <= 0.0);
        prop_assert_eq!(s.tangent_cone_contains(x, &v, 0.0).unwrap(), polar);
    }

    #[test]
    fn signed_distance_is_one_lipschitz(s in polygons(), p in prop::array::uniform4(-3.0f64..3.0)) {
        let (x, y) = ([p[0], p[1]], [p[2], p[3]]);
        for rep in [&s, &SetRep::ball(vec![0.2, -0.1], 0.8)] {
            prop_assert!((rep.signed_distance(&x) - rep.signed_distance(&y)).abs() <= dist(&x, &y) + 1e-9);
        }
    }

    #[test]
    fn erosion_shifts_signed_distance(s in polygons(), r in 0.01f64..0.3, q in prop::array::uniform2(-1.0f64..1.0)) {
        let inner = s.inner_approximation(r);
        prop_assume!(inner.is_ok());
        let inner = inner.unwrap();
        prop_assume!(s.signed_distance(&q) < -r);
        prop_assert!((inner.signed_distance(&q) - (s.signed_distance(&q) + r)).abs() <= 1e-9);
    }

    #[test]
    fn erosion_is_monotone(s in polygons(), r1 in 0.0f64..0.4, r2 in 0.0f64..0.4, q in prop::array::uniform2(-2.0f64..2.0)) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let (a, b) = (s.inner_approximation(lo), s.inner_approximation(hi));
        prop_assume!(a.is_ok() && b.is_ok());
        if b.unwrap().contains(&q) {
            prop_assert!(a.unwrap().contains(&q));
        }
    }

    #[test]
    fn crown_membership_matches_definition(r in 0.01f64..0.5, q in prop::array::uniform2(-1.5f64..1.5)) {
        let s = SetRep::square(1.0);
        let inside = s.signed_distance(&q) <= 0.0;
        let deep = -s.signed_distance(&q) > r + 1e-7;
        prop_assert_eq!(crown_contains(&s, r, &q), inside && !deep);
    }

    #[test]
    fn half_wedge_lower_boundary_clearance_is_quadratic(th in 0.0f64..std::f64::consts::TAU, eps in 0.05f64..0.5) {
        let v = unit(th);
        let big = Wedge::new(v.clone(), eps, vec![0.3, -0.2]).as_round_cone();
        let small = Wedge::new(v, eps / 2.0, vec![0.3, -0.2]);
        for p in lower_wedge_boundary(&small, 32) {
            let d = -big.sdf(&p);
            prop_assert!(d >= eps * eps / 5.0 && d <= eps * eps, "clearance {} at eps {}", d, eps);
        }
    }
}

#[test]
fn shipped_sets_have_pointed_normal_cones() {
    for sc in [scenario::square(), scenario::disk()] {
        let s = sc.build().unwrap().constraint;
        for x in s.sample_boundary(256) {
            assert!(s.normal_cone(&x).unwrap().is_pointed(), "{x:?}");
        }
    }
}

fn extended() -> &'static (ControlSystem, ControlSystem, f64) {
    static EXT: OnceLock<(ControlSystem, ControlSystem, f64)> = OnceLock::new();
    EXT.get_or_init(|| {
        let s = SetRep::square(1.0);
        let sys = ControlSystem::linear_stable(16, 0.0).restricted();
        let h = s.diameter() / 200.0;
        let ext = sys.extend_field(&s, h).unwrap();
        (sys, ext, h)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn extension_agrees_with_field_on_s(q in prop::array::uniform2(-1.0f64..1.0), k in 0usize..17) {
        let (sys, ext, h) = extended();
        let u = &sys.controls[k];
        let gap = dist(&ext.eval(&q, u), &sys.eval(&q, u));
        // each component is within L_f·h; the Euclidean gap within √2 of that
        prop_assert!(gap <= 2f64.sqrt() * sys.lipschitz * h + 1e-12, "gap {}", gap);
    }

    #[test]
    fn extension_components_are_lipschitz(p in prop::array::uniform4(-3.0f64..3.0), k in 0usize..17) {
        let (sys, ext, h) = extended();
        let (x, y) = ([p[0], p[1]], [p[2], p[3]]);
        prop_assume!(dist(&x, &y) > 1e-6);
        let u = &sys.controls[k];
        let (fx, fy) = (ext.eval(&x, u), ext.eval(&y, u));
        let l = sys.lipschitz;
        for i in 0..2 {
            prop_assert!((fx[i] - fy[i]).abs() <= (l + 2.0 * l * h) * dist(&x, &y) + 1e-12);
        }
    }
}

fn small_instance(seed: [f64; 12], depth: usize, linear: bool) -> (ControlSystem, PlanRequest) {
    let controls: Vec<Point> = (0..5)
        .map(|i| {
            let th = seed[i] * std::f64::consts::TAU;
            let r = 0.3 + 0.7 * seed[i + 5];
            vec![r * th.cos(), r * th.sin()]
        })
        .collect();
    let sys = if linear {
        ControlSystem::new("linear-stable", 2, Arc::new(|x, u| vec![u[0] - x[0], u[1] - x[1]]), 1.0, 1.0, controls)
    } else {
        ControlSystem::new("single-integrator", 2, Arc::new(|_x, u| u.to_vec()), 0.0, 1.0, controls)
    };
    let start = vec![1.6 * seed[10] - 0.8, 1.6 * seed[11] - 0.8];
    let target = SetRep::point(vec![0.8 * seed[0] - 0.4, 0.8 * seed[6] - 0.4]);
    let dwell = 0.1 + 0.2 * seed[1];
    let req = PlanRequest::new(start, 0.05, target, 0.05 + 0.25 * seed[7], dwell, depth as f64 * dwell);
    (sys, req)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn planner_is_sound_and_matches_oracle(seed in prop::array::uniform12(0.0f64..1.0), depth in 1usize..=6, linear in any::<bool>()) {
        let s = SetRep::square(1.0);
        let (sys, req) = small_instance(seed, depth, linear);
        let plan = plan_constrained(&sys, &s, &req).unwrap();
        prop_assert_eq!(plan.is_some(), oracle_bfs(&sys, &s, &req, depth).unwrap());
        if let Some(plan) = plan {
            prop_assert!(verify_plan_margin(&sys, &s, &plan, &req.start, req.margin).1);
            let fine = integrate_open_loop(&sys, &req.start, &plan, req.dwell / 20.0).unwrap();
            prop_assert!(req.target.distance(fine.last()) <= req.gamma + 1e-9);
            // no node state is visited twice
            let nodes = integrate_open_loop(&sys, &req.start, &plan, req.dwell).unwrap();
            for i in 0..nodes.states.len() {
                for j in i + 1..nodes.states.len() {
                    prop_assert!(dist(&nodes.states[i], &nodes.states[j]) > 1e-9);
                }
            }
        }
    }
}

/// Leftward patch everywhere, upward patch on a smaller ball: one switch before `t = 0.5`.
fn two_patch_feedback() -> (ControlSystem, PatchyFeedback) {
    let sys = ControlSystem::single_integrator(4, 0.0, false);
    let ball = |c: [f64; 2], r: f64, u: usize| Patch {
        domain: PatchDomain::Ball { center: c.to_vec(), radius: r },
        control: u,
        control_value: sys.controls[u].clone(),
        tag: PatchTag::Plain,
    };
    // controls: 0 east, 1 north, 2 west, 3 south
    let fb = PatchyFeedback::new(sys.name.clone(), SetRep::square(2.0), vec![ball([0.0, 0.0], 3.0, 2), ball([-0.5, 0.3], 0.5, 1)], None);
    (sys, fb)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vanishing_perturbations_give_nearby_endpoints(y in 0.0f64..0.15, x in 0.2f64..0.3, seed in any::<u64>()) {
        // entry into the upper ball by t = 0.4, exit not before t = 0.52
        let (sys, fb) = two_patch_feedback();
        let x0 = [x, y];
        let nominal = integrate_closed_loop(&sys, &fb, &x0, 0.01, 0.5, None).unwrap();
        let spec = PerturbSpec { level: 1e-9, pieces: 4, horizon: 0.5 };
        let p = Perturbation::generate(&spec, 2, seed);
        let (bv, l1) = perturbation_norms(&p);
        prop_assert!(bv < 1e-9 && l1 < 1e-9);
        let run = simulate_perturbed(&sys, &fb, &x0, &p, 0.01, 0.5, None).unwrap();
        prop_assert!(dist(run.last(), nominal.last()) <= 1e-6, "{}", dist(run.last(), nominal.last()));
    }
}
