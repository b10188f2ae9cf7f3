//! Constrained open-loop planning: a best-first search over dwell-time control
//! sequences whose trajectories keep a clearance margin inside `S` and end near
//! the target. A brute-force enumerator serves as ground truth on small instances.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate_open_loop, rk4_step, ControlSystem, OpenLoopControl};
use crate::geometry::SetRep;
use crate::{Error, Point, Result};

/// Above this many control sequences the planner prunes on a spatial hash.
pub const EXACT_DEDUP_LIMIT: f64 = 1e5;
/// Largest BFS layer the oracle will hold.
pub const ORACLE_LAYER_LIMIT: usize = 1_000_000;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanRequest {
    pub start: Point,
    /// Required clearance `r(x(t)) >= margin` along the whole trajectory.
    pub margin: f64,
    pub target: SetRep,
    pub gamma: f64,
    pub dwell: f64,
    pub horizon: f64,
    pub node_budget: usize,
    /// RK4 substeps per dwell interval; the margin is checked after each.
    pub substeps: usize,
}

impl PlanRequest {
    pub fn new(start: Point, margin: f64, target: SetRep, gamma: f64, dwell: f64, horizon: f64) -> Self {
        Self { start, margin, target, gamma, dwell, horizon, node_budget: 200_000, substeps: 4 }
    }

    fn max_depth(&self) -> usize {
        (self.horizon / self.dwell + 1e-9).floor() as usize
    }
}

/// One dwell interval under control `i`; `None` if the margin is violated.
fn transition(sys: &ControlSystem, s: &SetRep, req: &PlanRequest, x: &[f64], i: usize) -> Option<Point> {
    let h = req.dwell / req.substeps as f64;
    let u = &sys.controls[i];
    let mut y = x.to_vec();
    for _ in 0..req.substeps {
        y = rk4_step(sys, &y, u, h);
        if -s.signed_distance(&y) < req.margin {
            return None;
        }
    }
    Some(y)
}

fn exact_key(x: &[f64]) -> Vec<i64> {
    x.iter().map(|v| (v * 1e9).round() as i64).collect()
}

struct Node {
    state: Point,
    parent: usize,
    control: usize,
    depth: usize,
}

#[derive(PartialEq)]
struct Entry {
    f: f64,
    seq: usize,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        // min-heap on f, then insertion order
        o.f.total_cmp(&self.f).then(o.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Best-first search for a plan that keeps clearance `req.margin` and ends in `Σ^γ`.
///
/// `Ok(None)` means the budget or horizon ran out. When `|U|^depth` is at most
/// [`EXACT_DEDUP_LIMIT`], only bitwise-identical states are merged, so the search
/// is complete and agrees with [`oracle_bfs`].
pub fn plan_constrained(sys: &ControlSystem, s: &SetRep, req: &PlanRequest) -> Result<Option<OpenLoopControl>> {
    if -s.signed_distance(&req.start) < req.margin - 1e-12 {
        return Err(Error::Precondition("start point is not in S_r".into()));
    }
    if req.gamma <= 0.0 || req.dwell <= 0.0 {
        return Err(Error::Precondition("gamma and dwell must be positive".into()));
    }
    if req.target.distance(&req.start) <= req.gamma {
        return Ok(Some(OpenLoopControl::empty()));
    }
    let max_depth = req.max_depth();
    let v_max = sys.growth * (1.0 + s.max_norm());
    // measured top speed over S gives a much tighter bound than the growth estimate
    let mut probe = s.sample_interior(64, 0);
    probe.push(req.start.clone());
    let v_h = sys.max_speed(&probe).min(v_max).max(1e-12);
    let heuristic = |x: &[f64]| (req.target.distance(x) - req.gamma).max(0.0) / v_h;
    let exact = (sys.controls.len() as f64).powi(max_depth as i32) <= EXACT_DEDUP_LIMIT;
    // Hash cells must be smaller than one dwell step, or a node blocks its own successors,
    // and smaller than the goal ball, or one state per cell can miss it by a hair.
    let v_here = sys.max_speed(std::slice::from_ref(&req.start)).max(1e-12);
    let res = (req.dwell * v_here.min(v_max) / 2.0).min(req.gamma / 2.0);
    let key = |x: &[f64]| -> Vec<i64> {
        if exact {
            exact_key(x)
        } else {
            x.iter().map(|v| (v / res).floor() as i64).collect()
        }
    };

    let mut nodes = vec![Node { state: req.start.clone(), parent: usize::MAX, control: 0, depth: 0 }];
    let mut best_depth: HashMap<Vec<i64>, usize> = HashMap::new();
    best_depth.insert(key(&req.start), 0);
    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(Entry { f: heuristic(&req.start), seq, node: 0 });
    let mut expanded = 0usize;
    while let Some(Entry { node, .. }) = heap.pop() {
        let (depth, state) = (nodes[node].depth, nodes[node].state.clone());
        if node != 0 && req.target.distance(&state) <= req.gamma {
            let plan = reconstruct(&nodes, node, req.dwell);
            let (_, ok) = verify_plan_margin(sys, s, &plan, &req.start, req.margin);
            let fine = integrate_open_loop(sys, &req.start, &plan, req.dwell / 20.0)?;
            if ok && req.target.distance(fine.last()) <= req.gamma {
                return Ok(Some(plan));
            }
            continue;
        }
        if depth >= max_depth {
            continue;
        }
        expanded += 1;
        if expanded > req.node_budget {
            return Ok(None);
        }
        for i in 0..sys.controls.len() {
            let Some(y) = transition(sys, s, req, &state, i) else { continue };
            let k = key(&y);
            if best_depth.get(&k).is_some_and(|&d| d <= depth + 1) {
                continue;
            }
            best_depth.insert(k, depth + 1);
            nodes.push(Node { state: y.clone(), parent: node, control: i, depth: depth + 1 });
            seq += 1;
            let g = (depth + 1) as f64 * req.dwell;
            heap.push(Entry { f: g + heuristic(&y), seq, node: nodes.len() - 1 });
        }
    }
    Ok(None)
}

fn reconstruct(nodes: &[Node], mut i: usize, dwell: f64) -> OpenLoopControl {
    let mut cs = Vec::new();
    while i != 0 {
        cs.push(nodes[i].control);
        i = nodes[i].parent;
    }
    cs.reverse();
    OpenLoopControl::from_steps(dwell, cs)
}

/// Exhaustive search over all control sequences of length `<= depth`.
///
/// Bitwise-identical states reached at the same or a later layer are merged,
/// which leaves the answer unchanged since the dynamics are autonomous.
pub fn oracle_bfs(sys: &ControlSystem, s: &SetRep, req: &PlanRequest, depth: usize) -> Result<bool> {
    if req.target.distance(&req.start) <= req.gamma {
        return Ok(true);
    }
    if -s.signed_distance(&req.start) < req.margin - 1e-12 {
        return Ok(false);
    }
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    seen.insert(exact_key(&req.start));
    let mut layer = vec![req.start.clone()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for x in &layer {
            for i in 0..sys.controls.len() {
                let Some(y) = transition(sys, s, req, x, i) else { continue };
                if req.target.distance(&y) <= req.gamma {
                    return Ok(true);
                }
                if seen.insert(exact_key(&y)) {
                    next.push(y);
                }
            }
        }
        if next.len() > ORACLE_LAYER_LIMIT {
            return Err(Error::Precondition("oracle layer exceeds its size limit".into()));
        }
        if next.is_empty() {
            break;
        }
        layer = next;
    }
    Ok(false)
}

/// Re-integrates at a twentieth of the shortest dwell and returns
/// `min_t r(x(t)) - r` (negative once outside `S`) and whether it is `>= 0`.
pub fn verify_plan_margin(sys: &ControlSystem, s: &SetRep, u: &OpenLoopControl, xi: &[f64], r: f64) -> (f64, bool) {
    let shortest = u
        .breakpoints
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|l| *l > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !shortest.is_finite() {
        let m = -s.signed_distance(xi) - r;
        return (m, m >= 0.0);
    }
    match integrate_open_loop(sys, xi, u, shortest / 20.0) {
        Ok(tr) => {
            let m = tr.states.iter().map(|x| -s.signed_distance(x) - r).fold(f64::INFINITY, f64::min);
            (m, m >= 0.0)
        }
        Err(_) => (f64::NEG_INFINITY, false),
    }
}
