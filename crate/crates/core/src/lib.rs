//! Instance-specific sqrt(T) regret lower bounds for adaptive LQG control.
//!
//! The library solves the control and filter Riccati equations of a linear
//! quadratic Gaussian instance, computes policy-dependent Fisher information
//! matrices, certifies that the optimal policy is locally uninformative along
//! directions that move the optimal gain, evaluates the resulting lower-bound
//! constants (the general form and its closed-form state-feedback and
//! partially-observed corollaries), and ships a seeded Monte Carlo harness
//! that validates every identity and inequality involved at desk scale.

pub mod cli;
pub mod error;
pub mod fisher;
pub mod hardness;
pub mod matcalc;
pub mod model;
pub mod regret;
pub mod riccati;

pub use error::{LqgError, Result};
