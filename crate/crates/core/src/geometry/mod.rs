//! Nonsmooth geometry on constraint sets: signed distance, projections,
//! Clarke normal / tangent cones, wedges and inner approximations.
//!
//! Polytopes and balls are exact. [`DistanceOracle`] sets are only as good as
//! their evaluator and declared resolution `h`.

mod cone;
mod oracle;
mod round_cone;
mod set;
pub(crate) use set::random_unit;
mod wedge;

pub use cone::{Cone, ConeKind};
pub use oracle::DistanceOracle;
pub use round_cone::{cone_sdf, RoundCone};
pub use set::{Halfspace, Polytope, SetRep};
pub use wedge::{lower_wedge_boundary, wedge_certificate, CertificateConfig, Wedge};

/// Points with `|Δ_S(x)| <= TOL_BD` count as boundary points.
pub const TOL_BD: f64 = 1e-7;
/// A polytope face is active at `x` when its slack is at most `TOL_ACT`.
pub const TOL_ACT: f64 = 1e-7;
