//! MAP path estimation for state-space models on `ℝ^d`, with an overlapped
//! segment scheme for parallel solves and decay-convexity certificates that
//! bound the resulting error.
//!
//! The negative log posterior of a path `x_0, …, x_n` is
//! `U^n(x) = −log μ(x_0) − Σ_m log f(x_{m−1}, x_m) − Σ_m log g(x_m, y_m)`.
//! [`solver::solve_map`] minimizes it over the whole horizon;
//! [`parallel::solve_parallel`] minimizes it over enlarged windows and stitches
//! the pieces; [`certificates`] computes the constants that make the error of
//! that stitching computable in advance.

pub mod certificates;
pub mod error;
pub mod io;
pub mod linalg;
pub mod models;
pub mod objective;
pub mod oracles;
pub mod parallel;
pub mod path;
pub mod plan;
pub mod solver;

pub use error::{Error, Result};
pub use models::{Likelihood, ModelSpec, Observations, Signal};
pub use path::{gamma_inner, gamma_norm, weighted_norm_at, GammaWeight, PathVector};
pub use plan::{build_segment_plan, IndexRange, SegmentPlan};
