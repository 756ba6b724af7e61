//! Derivative-free solvers for bound-constrained composite minimization
//! `min h(F(x))`, where `h` is a known continuous selection and `F` is an
//! expensive blackbox mapping.
//!
//! Two solvers are provided:
//!
//! * [`solvers::run_msp`] — a manifold-sampling trust-region method whose
//!   subproblems minimize a piecewise-affine primal model built from
//!   selection-function gradients gathered near the incumbent.
//! * [`solvers::run_goombah`] — a method that directly minimizes `h(M(x+s))`
//!   over the trust region (`M` a componentwise linear model of `F`),
//!   optionally falling back to the manifold-sampling loop when the glassbox
//!   step fails to decrease the objective.
//!
//! The [`bench`] module carries the benchmarking protocol: post-hoc
//! approximate-stationarity scoring via sampled gradient bundles, and data
//! profiles over a Moré–Wild-style test suite ([`problems`]).

pub mod bench;
pub mod error;
pub mod history;
pub mod models;
pub mod problems;
pub mod selections;
pub mod solvers;
pub mod subproblems;

pub use error::{Error, Result};
