use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Cone, DistanceOracle, TOL_ACT, TOL_BD};
use crate::linalg::{axpy, dist, dot, lp_maximize, norm, normalized, solve, sub, subsets};
use crate::{Error, Point, Result};

/// `normal · x <= offset`, with `|normal| = 1` after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Point,
    pub offset: f64,
}

/// Bounded convex polytope with nonempty interior, in halfspace form.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<Halfspace>", into = "Vec<Halfspace>")]
pub struct Polytope {
    faces: Vec<Halfspace>,
    vertices: Vec<Point>,
    cheb_center: Point,
    cheb_radius: f64,
}

impl TryFrom<Vec<Halfspace>> for Polytope {
    type Error = Error;
    fn try_from(faces: Vec<Halfspace>) -> Result<Self> {
        Polytope::new(faces)
    }
}

impl From<Polytope> for Vec<Halfspace> {
    fn from(p: Polytope) -> Self {
        p.faces
    }
}

impl Polytope {
    pub fn new(faces: Vec<Halfspace>) -> Result<Self> {
        let p = Self::unchecked(faces)?;
        if p.cheb_radius <= 1e-12 {
            return Err(Error::InvalidSet("polytope has empty interior".into()));
        }
        Ok(p)
    }

    /// Normalizes and checks boundedness; interior may be empty.
    fn unchecked(faces: Vec<Halfspace>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::InvalidSet("no halfspaces".into()));
        }
        let d = faces[0].normal.len();
        let mut unit = Vec::with_capacity(faces.len());
        for f in faces {
            if f.normal.len() != d {
                return Err(Error::InvalidSet("mixed dimensions".into()));
            }
            let n = norm(&f.normal);
            if n < 1e-14 {
                return Err(Error::InvalidSet("zero normal".into()));
            }
            unit.push(Halfspace {
                normal: f.normal.iter().map(|a| a / n).collect(),
                offset: f.offset / n,
            });
        }
        if !recession_cone_trivial(&unit) {
            return Err(Error::InvalidSet("polytope is unbounded".into()));
        }
        let (cheb_center, cheb_radius) = chebyshev(&unit)
            .ok_or_else(|| Error::InvalidSet("polytope is empty".into()))?;
        let vertices = enumerate_vertices(&unit);
        Ok(Self { faces: unit, vertices, cheb_center, cheb_radius })
    }

    /// Axis-aligned box `[lo, hi]`; faces ordered `+e_0, -e_0, +e_1, -e_1, …`.
    pub fn boxed(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let d = lo.len();
        let mut faces = Vec::with_capacity(2 * d);
        for k in 0..d {
            let mut n = vec![0.0; d];
            n[k] = 1.0;
            faces.push(Halfspace { normal: n.clone(), offset: hi[k] });
            n[k] = -1.0;
            faces.push(Halfspace { normal: n, offset: -lo[k] });
        }
        Self::new(faces)
    }

    pub fn dim(&self) -> usize {
        self.faces[0].normal.len()
    }

    pub fn faces(&self) -> &[Halfspace] {
        &self.faces
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn chebyshev_radius(&self) -> f64 {
        self.cheb_radius
    }

    pub fn chebyshev_center(&self) -> &[f64] {
        &self.cheb_center
    }

    #[inline]
    pub fn slack(&self, i: usize, x: &[f64]) -> f64 {
        self.faces[i].offset - dot(&self.faces[i].normal, x)
    }

    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        let mut min_slack = f64::INFINITY;
        for i in 0..self.faces.len() {
            min_slack = min_slack.min(self.slack(i, x));
        }
        if min_slack >= 0.0 {
            -min_slack
        } else {
            dist(x, &self.project(x))
        }
    }

    /// Euclidean projection onto the polytope, by enumerating KKT active sets.
    pub fn project(&self, x: &[f64]) -> Point {
        let violated: Vec<usize> =
            (0..self.faces.len()).filter(|&i| self.slack(i, x) < 0.0).collect();
        if violated.is_empty() {
            return x.to_vec();
        }
        if violated.len() == 1 {
            let i = violated[0];
            let y = axpy(x, self.slack(i, x), &self.faces[i].normal);
            if self.is_feasible(&y, 1e-12) {
                return y;
            }
        }
        let d = self.dim();
        let mut best: Option<(f64, Point)> = None;
        for k in 1..=d.min(self.faces.len()) {
            for act in subsets(self.faces.len(), k) {
                // Gram system (A Aᵀ) λ = A x - b
                let gram: Vec<Vec<f64>> = act
                    .iter()
                    .map(|&i| act.iter().map(|&j| dot(&self.faces[i].normal, &self.faces[j].normal)).collect())
                    .collect();
                let rows: Vec<&[f64]> = gram.iter().map(|r| r.as_slice()).collect();
                let rhs: Vec<f64> = act.iter().map(|&i| -self.slack(i, x)).collect();
                let Some(lambda) = solve(&rows, &rhs) else { continue };
                if lambda.iter().any(|&l| l < -1e-12) {
                    continue;
                }
                let mut y = x.to_vec();
                for (&i, &l) in act.iter().zip(&lambda) {
                    y = axpy(&y, -l, &self.faces[i].normal);
                }
                if !self.is_feasible(&y, 1e-9) {
                    continue;
                }
                let dy = dist(x, &y);
                if best.as_ref().is_none_or(|(b, _)| dy < *b) {
                    best = Some((dy, y));
                }
            }
            if best.is_some() {
                break;
            }
        }
        best.map(|(_, y)| y).unwrap_or_else(|| self.cheb_center.clone())
    }

    fn is_feasible(&self, y: &[f64], tol: f64) -> bool {
        (0..self.faces.len()).all(|i| self.slack(i, y) >= -tol)
    }

    /// Faces shifted inward by `r`; `EmptySet` once no interior remains.
    pub fn eroded(&self, r: f64) -> Result<Self> {
        if r >= self.cheb_radius - 1e-12 {
            return Err(Error::EmptySet);
        }
        let faces = self
            .faces
            .iter()
            .map(|f| Halfspace { normal: f.normal.clone(), offset: f.offset - r })
            .collect();
        Self::new(faces)
    }

    /// Vertices in counter-clockwise order (planar polytopes only).
    pub fn ordered_vertices_2d(&self) -> Vec<Point> {
        let c = &self.cheb_center;
        let mut v = self.vertices.clone();
        v.sort_by(|a, b| {
            let ta = (a[1] - c[1]).atan2(a[0] - c[0]);
            let tb = (b[1] - c[1]).atan2(b[0] - c[0]);
            ta.total_cmp(&tb)
        });
        v
    }
}

fn null_direction(rows: &[&Halfspace], d: usize) -> Option<Point> {
    // Gram-Schmidt on the given normals, then on the standard basis.
    let mut basis: Vec<Point> = Vec::new();
    for r in rows {
        let mut v = r.normal.clone();
        for b in &basis {
            let p = dot(&v, b);
            v = axpy(&v, -p, b);
        }
        if norm(&v) < 1e-10 {
            return None;
        }
        basis.push(normalized(&v)?);
    }
    for k in 0..d {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        for b in &basis {
            let p = dot(&e, b);
            e = axpy(&e, -p, b);
        }
        if norm(&e) > 1e-8 {
            return normalized(&e);
        }
    }
    None
}

fn recession_cone_trivial(faces: &[Halfspace]) -> bool {
    let d = faces[0].normal.len();
    for sub in subsets(faces.len(), d - 1) {
        let rows: Vec<&Halfspace> = sub.iter().map(|&i| &faces[i]).collect();
        let Some(y) = null_direction(&rows, d) else { continue };
        for s in [1.0, -1.0] {
            if faces.iter().all(|f| s * dot(&f.normal, &y) <= 1e-12) {
                return false;
            }
        }
    }
    // rank deficiency: fewer than d independent normals
    let mut basis: Vec<Point> = Vec::new();
    for f in faces {
        let mut v = f.normal.clone();
        for b in &basis {
            let p = dot(&v, b);
            v = axpy(&v, -p, b);
        }
        if norm(&v) > 1e-10 {
            basis.push(normalized(&v).unwrap());
        }
    }
    basis.len() == d
}

fn chebyshev(faces: &[Halfspace]) -> Option<(Point, f64)> {
    let d = faces[0].normal.len();
    let g: Vec<Vec<f64>> = faces
        .iter()
        .map(|f| {
            let mut row = f.normal.clone();
            row.push(1.0);
            row
        })
        .collect();
    let h: Vec<f64> = faces.iter().map(|f| f.offset).collect();
    let mut c = vec![0.0; d + 1];
    c[d] = 1.0;
    let (z, t) = lp_maximize(&c, &g, &h)?;
    (t >= -1e-12).then(|| (z[..d].to_vec(), t.max(0.0)))
}

fn enumerate_vertices(faces: &[Halfspace]) -> Vec<Point> {
    let d = faces[0].normal.len();
    let mut out: Vec<Point> = Vec::new();
    for sub in subsets(faces.len(), d) {
        let rows: Vec<&[f64]> = sub.iter().map(|&i| faces[i].normal.as_slice()).collect();
        let rhs: Vec<f64> = sub.iter().map(|&i| faces[i].offset).collect();
        let Some(v) = solve(&rows, &rhs) else { continue };
        if faces.iter().all(|f| dot(&f.normal, &v) <= f.offset + 1e-9) && !out.iter().any(|w| dist(w, &v) < 1e-9) {
            out.push(v);
        }
    }
    out
}

/// A constraint or target set.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetRep {
    Polytope(Polytope),
    Ball { center: Point, radius: f64 },
    /// Not serializable; built in code only.
    #[serde(skip)]
    Oracle(DistanceOracle),
}

impl SetRep {
    pub fn square(half: f64) -> Self {
        SetRep::Polytope(Polytope::boxed(&[-half, -half], &[half, half]).expect("valid box"))
    }

    pub fn ball(center: Point, radius: f64) -> Self {
        SetRep::Ball { center, radius }
    }

    pub fn point(center: Point) -> Self {
        SetRep::Ball { center, radius: 0.0 }
    }

    pub fn dim(&self) -> usize {
        match self {
            SetRep::Polytope(p) => p.dim(),
            SetRep::Ball { center, .. } => center.len(),
            SetRep::Oracle(o) => o.dim(),
        }
    }

    /// `Δ(x) = d(x, S) - d(x, closure(R^d \ S))`.
    #[inline]
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match self {
            SetRep::Polytope(p) => p.signed_distance(x),
            SetRep::Ball { center, radius } => dist(x, center) - radius,
            SetRep::Oracle(o) => o.eval(x),
        }
    }

    /// `d(x, S)`.
    #[inline]
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.signed_distance(x).max(0.0)
    }

    /// `r(x) = d(x, closure(R^d \ S))`; zero outside `S`.
    #[inline]
    pub fn clearance(&self, x: &[f64]) -> f64 {
        (-self.signed_distance(x)).max(0.0)
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) <= 0.0
    }

    /// Nearest point of the complement closure and `r(x)`, for `x ∈ S`.
    ///
    /// Ties between polytope faces go to the lowest face index.
    pub fn project_to_complement_closure(&self, x: &[f64]) -> Result<(Point, f64)> {
        let sd = self.signed_distance(x);
        if sd > TOL_BD {
            return Err(Error::Precondition(format!("point outside set (Δ = {sd:e})")));
        }
        match self {
            SetRep::Polytope(p) => {
                let mut best = 0;
                let mut best_slack = p.slack(0, x);
                for i in 1..p.faces().len() {
                    let s = p.slack(i, x);
                    if s < best_slack - 1e-12 {
                        best = i;
                        best_slack = s;
                    }
                }
                let r = best_slack.max(0.0);
                Ok((axpy(x, best_slack, &p.faces()[best].normal), r))
            }
            SetRep::Ball { center, radius } => {
                let dir = normalized(&sub(x, center)).unwrap_or_else(|| {
                    let mut e = vec![0.0; x.len()];
                    e[0] = 1.0;
                    e
                });
                Ok((axpy(center, *radius, &dir), (radius - dist(x, center)).max(0.0)))
            }
            SetRep::Oracle(o) => {
                let g = o.gradient(x);
                let dir = normalized(&g).unwrap_or_else(|| {
                    let mut e = vec![0.0; x.len()];
                    e[0] = 1.0;
                    e
                });
                let r = (-sd).max(0.0);
                Ok((o.project_to_level(&axpy(x, r, &dir)), r))
            }
        }
    }

    /// Nearest point of `S` (identity inside).
    pub fn project_onto(&self, x: &[f64]) -> Point {
        match self {
            SetRep::Polytope(p) => p.project(x),
            SetRep::Ball { center, radius } => {
                let d = dist(x, center);
                if d <= *radius {
                    x.to_vec()
                } else {
                    axpy(center, radius / d, &sub(x, center))
                }
            }
            SetRep::Oracle(o) => {
                if o.eval(x) <= 0.0 {
                    x.to_vec()
                } else {
                    o.project_to_level(x)
                }
            }
        }
    }

    /// Clarke normal cone at a boundary point, with the default activity tolerance.
    pub fn normal_cone(&self, x: &[f64]) -> Result<Cone> {
        self.normal_cone_with(x, TOL_ACT)
    }

    /// Clarke normal cone; polytope faces with slack `<= tol_act` count as active.
    pub fn normal_cone_with(&self, x: &[f64], tol_act: f64) -> Result<Cone> {
        let sd = self.signed_distance(x);
        if sd.abs() > TOL_BD.max(tol_act) {
            return Err(Error::NotBoundaryPoint(sd));
        }
        let gens = match self {
            SetRep::Polytope(p) => (0..p.faces().len())
                .filter(|&i| p.slack(i, x) <= tol_act)
                .map(|i| p.faces()[i].normal.clone())
                .collect(),
            SetRep::Ball { center, .. } => {
                vec![normalized(&sub(x, center)).ok_or(Error::NotBoundaryPoint(sd))?]
            }
            SetRep::Oracle(o) => oracle_normals(o, x),
        };
        Ok(Cone::normal(gens))
    }

    /// Normal cone at `x` of the level set `S_{r(x)}` that passes through `x`.
    ///
    /// Polytope faces count as active when their slack is within `tol_act` of the smallest slack.
    pub fn level_normal_cone(&self, x: &[f64], tol_act: f64) -> Result<Cone> {
        match self {
            SetRep::Polytope(p) => {
                let slacks: Vec<f64> = (0..p.faces().len()).map(|i| p.slack(i, x)).collect();
                let m = slacks.iter().copied().fold(f64::INFINITY, f64::min);
                Ok(Cone::normal(
                    (0..slacks.len()).filter(|&i| slacks[i] <= m + tol_act).map(|i| p.faces()[i].normal.clone()).collect(),
                ))
            }
            SetRep::Ball { center, .. } => Ok(Cone::normal(normalized(&sub(x, center)).into_iter().collect())),
            SetRep::Oracle(o) => {
                let r = (-o.eval(x)).max(0.0);
                let lifted = DistanceOracle::new(
                    {
                        let o = o.clone();
                        move |y: &[f64]| o.eval(y) + r
                    },
                    o.h,
                    o.lo.clone(),
                    o.hi.clone(),
                );
                Ok(Cone::normal(oracle_normals(&lifted, x)))
            }
        }
    }

    /// `v + margin·B ⊂ T_S^C(x)`.
    pub fn tangent_cone_contains(&self, x: &[f64], v: &[f64], margin: f64) -> Result<bool> {
        Ok(self.normal_cone(x)?.polar_contains(v, margin))
    }

    /// Bouligand tangent cone membership at `x ∈ closure(S)`.
    pub fn bouligand_contains(&self, x: &[f64], v: &[f64]) -> bool {
        match self {
            SetRep::Polytope(p) => (0..p.faces().len())
                .filter(|&i| p.slack(i, x) <= TOL_ACT)
                .all(|i| dot(&p.faces()[i].normal, v) <= 1e-12),
            SetRep::Ball { center, radius } => {
                dist(x, center) < radius - TOL_ACT || dot(&sub(x, center), v) <= 1e-12
            }
            SetRep::Oracle(o) => {
                if o.eval(x) < -TOL_ACT {
                    return true;
                }
                let mut t = o.h;
                let mut best = f64::INFINITY;
                for _ in 0..=20 {
                    best = best.min(o.eval(&axpy(x, t, v)).max(0.0) / t);
                    t *= 0.5;
                }
                best < 1e-4
            }
        }
    }

    /// `S_r = {x : d(x, R^d \ S) >= r}`.
    pub fn inner_approximation(&self, r: f64) -> Result<SetRep> {
        if r < 0.0 {
            return Err(Error::Precondition("negative erosion radius".into()));
        }
        if r == 0.0 {
            return Ok(self.clone());
        }
        match self {
            SetRep::Polytope(p) => Ok(SetRep::Polytope(p.eroded(r)?)),
            SetRep::Ball { center, radius } => {
                if *radius - r <= 0.0 {
                    Err(Error::EmptySet)
                } else {
                    Ok(SetRep::Ball { center: center.clone(), radius: radius - r })
                }
            }
            SetRep::Oracle(o) => {
                let e = o.eroded(r);
                let inside = grid_points(&o.lo, &o.hi, 4096).iter().any(|x| e.eval(x) < 0.0);
                if inside {
                    Ok(SetRep::Oracle(e))
                } else {
                    Err(Error::EmptySet)
                }
            }
        }
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        match self {
            SetRep::Polytope(p) => {
                let d = p.dim();
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for v in p.vertices() {
                    for k in 0..d {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo, hi)
            }
            SetRep::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            SetRep::Oracle(o) => (o.lo.clone(), o.hi.clone()),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            SetRep::Polytope(p) => {
                let v = p.vertices();
                let mut d: f64 = 0.0;
                for i in 0..v.len() {
                    for j in i + 1..v.len() {
                        d = d.max(dist(&v[i], &v[j]));
                    }
                }
                d
            }
            SetRep::Ball { radius, .. } => 2.0 * radius,
            SetRep::Oracle(o) => dist(&o.lo, &o.hi),
        }
    }

    /// `max |x|` over the set.
    pub fn max_norm(&self) -> f64 {
        match self {
            SetRep::Polytope(p) => p.vertices().iter().map(|v| norm(v)).fold(0.0, f64::max),
            SetRep::Ball { center, radius } => norm(center) + radius,
            SetRep::Oracle(o) => norm(&o.lo).max(norm(&o.hi)),
        }
    }

    /// Deterministic boundary sample of at least `n` points.
    ///
    /// Planar polytopes are walked counter-clockwise by arc length (vertices
    /// included); planar balls by angle. Other cases cast seeded rays or
    /// project grid points onto the zero level set.
    pub fn sample_boundary(&self, n: usize) -> Vec<Point> {
        let d = self.dim();
        match self {
            SetRep::Polytope(p) if d == 2 => polygon_walk(&p.ordered_vertices_2d(), n),
            SetRep::Polytope(p) => {
                let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
                let c = p.chebyshev_center().to_vec();
                let mut out: Vec<Point> = p.vertices().to_vec();
                while out.len() < n {
                    let u = random_unit(&mut rng, d);
                    let t = (0..p.faces().len())
                        .filter_map(|i| {
                            let a = dot(&p.faces()[i].normal, &u);
                            (a > 1e-14).then(|| p.slack(i, &c) / a)
                        })
                        .fold(f64::INFINITY, f64::min);
                    out.push(axpy(&c, t, &u));
                }
                out
            }
            SetRep::Ball { center, radius } => {
                if d == 2 {
                    (0..n)
                        .map(|k| {
                            let th = 2.0 * PI * k as f64 / n as f64;
                            vec![center[0] + radius * th.cos(), center[1] + radius * th.sin()]
                        })
                        .collect()
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
                    (0..n).map(|_| axpy(center, *radius, &random_unit(&mut rng, d))).collect()
                }
            }
            SetRep::Oracle(o) => oracle_boundary(o, n),
        }
    }

    /// Seeded uniform sample of points of the set (rejection from the bounding box).
    pub fn sample_interior(&self, n: usize, seed: u64) -> Vec<Point> {
        let (lo, hi) = self.bounding_box();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        let mut tries = 0usize;
        while out.len() < n && tries < 1000 * n.max(1) {
            tries += 1;
            let x: Point = (0..lo.len()).map(|k| rng.gen_range(lo[k]..=hi[k])).collect();
            if self.contains(&x) {
                out.push(x);
            }
        }
        out
    }
}

pub(crate) fn random_unit<R: Rng>(rng: &mut R, d: usize) -> Point {
    loop {
        // Box-Muller normals
        let v: Point = (0..d)
            .map(|_| {
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
            })
            .collect();
        if let Some(u) = normalized(&v) {
            return u;
        }
    }
}

/// Regular grid of roughly `n` points over a box.
pub(crate) fn grid_points(lo: &[f64], hi: &[f64], n: usize) -> Vec<Point> {
    let d = lo.len();
    let per = ((n as f64).powf(1.0 / d as f64).ceil() as usize).max(2);
    let total = per.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|k| {
                    let i = idx % per;
                    idx /= per;
                    lo[k] + (hi[k] - lo[k]) * (i as f64 + 0.5) / per as f64
                })
                .collect()
        })
        .collect()
}

fn polygon_walk(verts: &[Point], n: usize) -> Vec<Point> {
    let m = verts.len();
    let lens: Vec<f64> = (0..m).map(|i| dist(&verts[i], &verts[(i + 1) % m])).collect();
    let total: f64 = lens.iter().sum();
    let step = total / n.max(1) as f64;
    let mut out = Vec::with_capacity(n + m);
    let mut acc = 0.0;
    for i in 0..m {
        let a = &verts[i];
        let b = &verts[(i + 1) % m];
        out.push(a.clone());
        // samples strictly inside this edge
        let mut k = (acc / step).floor() as i64 + 1;
        loop {
            let s = k as f64 * step - acc;
            if s >= lens[i] - 1e-12 * total {
                break;
            }
            if s > 1e-12 * total {
                let t = s / lens[i];
                out.push(a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect());
            }
            k += 1;
        }
        acc += lens[i];
    }
    out
}

fn oracle_normals(o: &DistanceOracle, x: &[f64]) -> Vec<Point> {
    let d = x.len();
    let mut dirs: Vec<Point> = Vec::new();
    if d == 2 {
        for k in 0..128 {
            let th = 2.0 * PI * (k as f64 + 0.5) / 128.0;
            dirs.push(vec![th.cos(), th.sin()]);
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
        for _ in 0..512 {
            dirs.push(random_unit(&mut rng, d));
        }
    }
    let mut gens: Vec<Point> = Vec::new();
    for scale in [1.0, 0.5, 0.25] {
        for u in &dirs {
            let z = axpy(x, o.h * scale, u);
            let dz = o.eval(&z);
            if dz <= 1e-12 {
                continue;
            }
            let Some(g) = normalized(&o.gradient(&z)) else { continue };
            let proj = axpy(&z, -dz, &g);
            if dist(&proj, x) > o.h {
                continue;
            }
            if !gens.iter().any(|p| dot(p, &g) > 1.0 - 1e-4) {
                gens.push(g);
            }
        }
    }
    gens
}

fn oracle_boundary(o: &DistanceOracle, n: usize) -> Vec<Point> {
    let d = o.dim();
    let per: usize = if d == 2 { 240 } else { 40 };
    let cands = grid_points(&o.lo.iter().map(|v| v - o.h).collect::<Vec<_>>(), &o.hi.iter().map(|v| v + o.h).collect::<Vec<_>>(), per.pow(d as u32));
    let cell = (0..d).map(|k| (o.hi[k] - o.lo[k]) / per as f64).fold(0.0, f64::max);
    let mut pts: Vec<Point> = cands
        .iter()
        .filter(|z| o.eval(z).abs() < cell)
        .map(|z| o.project_to_level(z))
        .filter(|z| o.eval(z).abs() < 1e-9)
        .collect();
    let center: Point = (0..d).map(|k| 0.5 * (o.lo[k] + o.hi[k])).collect();
    if d == 2 {
        pts.sort_by(|a, b| {
            let ta = (a[1] - center[1]).atan2(a[0] - center[0]);
            let tb = (b[1] - center[1]).atan2(b[0] - center[0]);
            ta.total_cmp(&tb)
        });
    }
    let mut out: Vec<Point> = o.features.clone();
    if !pts.is_empty() {
        let stride = (pts.len() as f64 / n.max(1) as f64).max(1.0);
        let mut k = 0.0;
        while (k as usize) < pts.len() && out.len() < n + o.features.len() {
            out.push(pts[k as usize].clone());
            k += stride;
        }
    }
    out
}
