//! Patchy feedback construction.
//!
//! A [`PatchyFeedback`] is an ordered list of patches, each an open domain with
//! a constant control. The active control at `x` comes from the highest-indexed
//! patch containing `x`. Boundary patches (shifted wedges near `∂S`) come
//! first, then tube patches around planned trajectories.

mod assemble;
mod boundary;
mod domain;
mod inward;
mod tube;

use serde::{Deserialize, Serialize};

use crate::geometry::SetRep;
use crate::{Error, Point, Result};

pub use assemble::{assemble_feedback, band_samples, coverage_gaps, coverage_grid, synthesize, AssemblyParams, Synthesis, SynthesisConfig, SynthesisReport, TubeFamily};
pub use boundary::{boundary_feedback, boundary_patch, crown_samples, inward_control, BoundaryConfig, BoundaryFeedback, BoundaryPatchParams};
pub use domain::{ExitCap, PatchDomain};
pub use inward::{check_inward_sampled, InwardReport};
pub use tube::{tube_around, TubeConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatchTag {
    Boundary { anchor: Point },
    Tube { seed: usize, segment: usize },
    Plain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub domain: PatchDomain,
    /// Index into the system's control sample.
    pub control: usize,
    pub control_value: Point,
    pub tag: PatchTag,
}

impl Patch {
    pub fn is_boundary(&self) -> bool {
        matches!(self.tag, PatchTag::Boundary { .. })
    }
}

/// Uniform grid over primitive bounding boxes; each cell lists
/// `(patch, piece)` pairs in decreasing patch order.
#[derive(Clone, Debug, Default)]
struct GridIndex {
    lo: Point,
    cell: f64,
    dims: Vec<usize>,
    cells: Vec<Vec<(u32, u32)>>,
}

impl GridIndex {
    fn build(patches: &[Patch]) -> Self {
        if patches.is_empty() {
            return Self::default();
        }
        let d = patches[0].domain.bounding_box().0.len();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut boxes = Vec::new();
        for (i, p) in patches.iter().enumerate() {
            for k in 0..p.domain.pieces() {
                let (l, h) = p.domain.piece_bbox(k);
                for j in 0..d {
                    lo[j] = lo[j].min(l[j]);
                    hi[j] = hi[j].max(h[j]);
                }
                boxes.push((i as u32, k as u32, l, h));
            }
        }
        let extent = (0..d).map(|j| hi[j] - lo[j]).fold(0.0, f64::max).max(1e-9);
        let per_axis = if d <= 2 { 128.0 } else { 24.0 };
        let cell = extent / per_axis;
        let dims: Vec<usize> = (0..d).map(|j| ((hi[j] - lo[j]) / cell).floor() as usize + 1).collect();
        let total: usize = dims.iter().product();
        let mut cells = vec![Vec::new(); total];
        for (i, k, l, h) in boxes.iter().rev() {
            let a: Vec<usize> = (0..d).map(|j| ((l[j] - lo[j]) / cell).floor() as usize).collect();
            let b: Vec<usize> = (0..d).map(|j| (((h[j] - lo[j]) / cell).floor() as usize).min(dims[j] - 1)).collect();
            let mut idx = a.clone();
            loop {
                let mut flat = 0;
                for j in (0..d).rev() {
                    flat = flat * dims[j] + idx[j];
                }
                cells[flat].push((*i, *k));
                let mut j = 0;
                while j < d {
                    if idx[j] < b[j] {
                        idx[j] += 1;
                        break;
                    }
                    idx[j] = a[j];
                    j += 1;
                }
                if j == d {
                    break;
                }
            }
        }
        Self { lo, cell, dims, cells }
    }

    fn candidates(&self, x: &[f64]) -> &[(u32, u32)] {
        if self.cells.is_empty() {
            return &[];
        }
        let mut flat = 0;
        for j in (0..self.dims.len()).rev() {
            let c = (x[j] - self.lo[j]) / self.cell;
            if !(c >= 0.0) || c as usize >= self.dims[j] {
                return &[];
            }
            flat = flat * self.dims[j] + c as usize;
        }
        &self.cells[flat]
    }
}

/// Points whose distance to `target` is at most `radius` are outside the domain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Exclusion {
    pub target: SetRep,
    pub radius: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PatchyFeedback {
    pub system: String,
    pub constraint: SetRep,
    pub patches: Vec<Patch>,
    pub excluded: Option<Exclusion>,
    #[serde(skip)]
    index: GridIndex,
}

impl PatchyFeedback {
    pub fn new(system: impl Into<String>, constraint: SetRep, patches: Vec<Patch>, excluded: Option<Exclusion>) -> Self {
        let index = GridIndex::build(&patches);
        Self { system: system.into(), constraint, patches, excluded, index }
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn boundary_count(&self) -> usize {
        self.patches.iter().filter(|p| p.is_boundary()).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let fb: PatchyFeedback = serde_json::from_str(s)?;
        Ok(Self::new(fb.system, fb.constraint, fb.patches, fb.excluded))
    }

    pub fn is_excluded(&self, x: &[f64]) -> bool {
        self.excluded.as_ref().is_some_and(|e| e.target.distance(x) <= e.radius)
    }

    /// Largest index among patches containing `x`, ignoring the exclusion.
    pub fn top_patch(&self, x: &[f64]) -> Option<usize> {
        self.top_patch_below(x, usize::MAX)
    }

    /// Largest index `< bound` among patches containing `x`.
    pub fn top_patch_below(&self, x: &[f64], bound: usize) -> Option<usize> {
        let mut skip: Option<u32> = None;
        for &(i, k) in self.index.candidates(x) {
            if i as usize >= bound || skip == Some(i) {
                continue;
            }
            let dom = &self.patches[i as usize].domain;
            if dom.piece_sdf(k as usize, x) < 0.0 {
                if dom.clip_ok(&self.constraint, x) {
                    return Some(i as usize);
                }
                skip = Some(i);
            }
        }
        None
    }

    /// Largest depth of `x` inside any single patch; `-∞` if none contains it.
    pub fn max_depth(&self, x: &[f64]) -> f64 {
        let mut best = f64::NEG_INFINITY;
        let mut last = None;
        for &(i, _) in self.index.candidates(x) {
            if last == Some(i) {
                continue;
            }
            last = Some(i);
            best = best.max(self.patches[i as usize].domain.depth(&self.constraint, x));
        }
        best
    }

    /// Same as [`alpha_star`], restricted to the boundary patches.
    pub fn boundary_alpha_star(&self, x: &[f64]) -> Option<usize> {
        self.top_patch_below(x, self.boundary_count())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        alpha_star(self, x).is_some()
    }
}

/// `α*(x)`: largest index of a patch containing `x`; `None` iff `x ∉ D`.
pub fn alpha_star(fb: &PatchyFeedback, x: &[f64]) -> Option<usize> {
    if fb.is_excluded(x) {
        return None;
    }
    fb.top_patch(x)
}

/// Control value of patch `α*(x)`.
pub fn eval_feedback(fb: &PatchyFeedback, x: &[f64]) -> Result<Point> {
    alpha_star(fb, x)
        .map(|a| fb.patches[a].control_value.clone())
        .ok_or_else(|| Error::OutsideDomain(x.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_balls() -> PatchyFeedback {
        let ball = |c: f64, u: f64| Patch {
            domain: PatchDomain::Ball { center: vec![c, 0.0], radius: 1.0 },
            control: 0,
            control_value: vec![u, 0.0],
            tag: PatchTag::Plain,
        };
        PatchyFeedback::new("test", SetRep::square(5.0), vec![ball(0.0, 1.0), ball(0.5, 2.0)], None)
    }

    #[test]
    fn alpha_star_examples() {
        let fb = two_balls();
        assert_eq!(alpha_star(&fb, &[0.6, 0.0]), Some(1));
        assert_eq!(alpha_star(&fb, &[-0.5, 0.0]), Some(0));
        assert_eq!(alpha_star(&fb, &[5.0, 5.0]), None);
    }

    #[test]
    fn eval_examples() {
        let fb = two_balls();
        assert_eq!(eval_feedback(&fb, &[0.6, 0.0]).unwrap(), vec![2.0, 0.0]);
        assert_eq!(eval_feedback(&fb, &[-0.5, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert!(matches!(eval_feedback(&fb, &[5.0, 5.0]), Err(Error::OutsideDomain(_))));
    }

    #[test]
    fn json_roundtrip_rebuilds_index() {
        let fb = two_balls();
        let back = PatchyFeedback::from_json(&fb.to_json().unwrap()).unwrap();
        assert_eq!(alpha_star(&back, &[0.6, 0.0]), Some(1));
        assert_eq!(back.to_json().unwrap(), fb.to_json().unwrap());
    }
}
