use serde::{Deserialize, Serialize};

use crate::linalg::{dot, lp_maximize, norm};
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeKind {
    /// Conic hull of the generators.
    Normal,
    /// Polar of the conic hull of the generators.
    Tangent,
}

/// A finitely generated cone. Generators are unit vectors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cone {
    pub generators: Vec<Point>,
    pub kind: ConeKind,
}

impl Cone {
    pub fn normal(generators: Vec<Point>) -> Self {
        Self { generators, kind: ConeKind::Normal }
    }

    pub fn polar(&self) -> Self {
        let kind = match self.kind {
            ConeKind::Normal => ConeKind::Tangent,
            ConeKind::Tangent => ConeKind::Normal,
        };
        Self { generators: self.generators.clone(), kind }
    }

    /// `v + margin·B ⊂ polar(hull(generators))`, i.e. `p·v <= -margin |p|` for every generator.
    pub fn polar_contains(&self, v: &[f64], margin: f64) -> bool {
        self.generators
            .iter()
            .all(|p| dot(p, v) <= -margin * norm(p))
    }

    /// Whether the conic hull of the generators contains no line.
    ///
    /// By Gordan's alternative this holds iff some `y` has `p·y < 0` for all
    /// generators; decided with a small LP over `|y|_∞ <= 1`.
    pub fn hull_is_pointed(&self) -> bool {
        if self.generators.is_empty() {
            return true;
        }
        let d = self.generators[0].len();
        // variables (y, t): maximize t s.t. p·y + t <= 0, -1 <= y_j <= 1, t <= 1
        let mut g = Vec::new();
        let mut h = Vec::new();
        for p in &self.generators {
            let mut row = p.clone();
            row.push(1.0);
            g.push(row);
            h.push(0.0);
        }
        for j in 0..d {
            for s in [1.0, -1.0] {
                let mut row = vec![0.0; d + 1];
                row[j] = s;
                g.push(row);
                h.push(1.0);
            }
        }
        let mut row = vec![0.0; d + 1];
        row[d] = 1.0;
        g.push(row);
        h.push(1.0);
        let mut c = vec![0.0; d + 1];
        c[d] = 1.0;
        lp_maximize(&c, &g, &h).is_some_and(|(_, t)| t > 1e-9)
    }

    /// Pointedness in the sense of the cone's own kind: a normal cone must
    /// contain no line; a tangent cone must have nonempty interior, which is
    /// the same condition on the generators.
    pub fn is_pointed(&self) -> bool {
        self.hull_is_pointed()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointedness() {
        assert!(Cone::normal(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).is_pointed());
        assert!(!Cone::normal(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).is_pointed());
        assert!(!Cone::normal(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0]
        ])
        .is_pointed());
        assert!(Cone::normal(vec![]).is_pointed());
    }

    #[test]
    fn polar_membership() {
        let c = Cone::normal(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(c.polar_contains(&[-1.0, 0.0], 0.0));
        assert!(!c.polar_contains(&[-1.0, 0.0], 0.1));
        assert!(c.polar_contains(&[-1.0, -1.0], 0.5));
    }
}
