//! Small dense vector helpers on `&[f64]` plus a vertex-enumeration LP for
//! the low-dimensional problems that show up in polytope geometry.

use nalgebra::{DMatrix, DVector};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[inline]
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[inline]
pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[inline]
pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `a + s * b`
#[inline]
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    (n > 1e-300).then(|| scale(a, 1.0 / n))
}

/// Some unit vector orthogonal to `a` (`a` nonzero, `d >= 2`).
pub fn orthogonal_unit(a: &[f64]) -> Vec<f64> {
    let d = a.len();
    let mut best = 0;
    for i in 1..d {
        if a[i].abs() < a[best].abs() {
            best = i;
        }
    }
    let mut e = vec![0.0; d];
    e[best] = 1.0;
    let an = normalized(a).unwrap_or_else(|| e.clone());
    let proj = dot(&e, &an);
    normalized(&axpy(&e, -proj, &an)).unwrap_or(e)
}

/// Orthonormal basis of the complement of `a` in `R^d`.
pub fn orthonormal_complement(a: &[f64]) -> Vec<Vec<f64>> {
    let d = a.len();
    let mut basis: Vec<Vec<f64>> = vec![normalized(a).expect("nonzero axis")];
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        for b in &basis {
            let p = dot(&e, b);
            e = axpy(&e, -p, b);
        }
        if let Some(u) = normalized(&e) {
            if norm(&e) > 1e-8 {
                basis.push(u);
            }
        }
        if basis.len() == d {
            break;
        }
    }
    basis.remove(0);
    basis
}

/// Solves the square system `m x = rhs`; `None` if (numerically) singular.
pub fn solve(rows: &[&[f64]], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let lu = m.lu();
    let det = lu.determinant();
    if !det.is_finite() || det.abs() < 1e-13 {
        return None;
    }
    lu.solve(&DVector::from_column_slice(rhs))
        .map(|x| x.iter().copied().collect())
}

/// All `k`-subsets of `0..n`, in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Maximizes `c·z` subject to `g z <= h` by enumerating basic solutions.
///
/// Only meant for tiny problems (a handful of variables and constraints) with
/// a bounded feasible region. Returns the maximizer and the optimal value.
pub fn lp_maximize(c: &[f64], g: &[Vec<f64>], h: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = c.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for sub in subsets(g.len(), n) {
        let rows: Vec<&[f64]> = sub.iter().map(|&i| g[i].as_slice()).collect();
        let rhs: Vec<f64> = sub.iter().map(|&i| h[i]).collect();
        let Some(z) = solve(&rows, &rhs) else { continue };
        let feasible = g
            .iter()
            .zip(h)
            .all(|(gi, hi)| dot(gi, &z) <= hi + 1e-9 * (1.0 + hi.abs()));
        if !feasible {
            continue;
        }
        let val = dot(c, &z);
        if best.as_ref().is_none_or(|(_, b)| val > *b + 1e-15) {
            best = Some((z, val));
        }
    }
    best
}
