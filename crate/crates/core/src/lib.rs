//! Patchy feedback synthesis for control systems constrained to a wedged set.
//!
//! The crate builds a piecewise-constant ("patchy") state feedback that keeps
//! closed-loop trajectories inside a constraint set `S` and steers them into a
//! neighbourhood of a target `Σ`, and then checks the result by simulation.
//!
//! Layout follows the pipeline:
//! - [`geometry`]: signed distances, cones, wedges and inner approximations.
//! - [`constraint`]: sampled certificates for the hypotheses on `S`.
//! - [`dynamics`]: control systems, open-loop integration, Lipschitz extension.
//! - [`planner`]: constrained open-loop plans (best-first search + brute-force oracle).
//! - [`synthesis`]: boundary patches, tubes and the assembled feedback.
//! - [`simulator`]: closed-loop integration with switch detection and perturbations.
//! - [`scenario`], [`pipeline`], [`svg`]: the scenario file format and CLI plumbing.

// `!(x > 0.0)` rejects NaN along with nonpositive values; that is the intent throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraint;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod pipeline;
pub mod planner;
pub mod scenario;
pub mod simulator;
pub mod svg;
pub mod synthesis;

pub use error::{Error, Result};

/// A point (or vector) in `R^d`.
pub type Point = Vec<f64>;
