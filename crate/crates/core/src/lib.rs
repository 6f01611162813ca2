//! Distributed Douglas–Rachford splitting for linearly constrained,
//! multi-block, weakly convex problems.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod bench;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod problem;
pub mod prox;
pub mod residuals;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use problem::{Block, BlockFunction, ConstraintSet, IterateState, LinearCoupling, ProblemInstance, SolverParams};
pub use scalar::Real;
pub use solver::{ddrsm_solve, ddrsm_solve_with, default_init, SolveOptions, SolveResult, SolveStatus, SolveTrace};

pub type ProblemF64 = ProblemInstance<f64>;
pub type ProblemF32 = ProblemInstance<f32>;
pub type ParamsF64 = SolverParams<f64>;
pub type ParamsF32 = SolverParams<f32>;
pub type StateF64 = IterateState<f64>;
pub type StateF32 = IterateState<f32>;
pub type ResultF64 = SolveResult<f64>;
pub type ResultF32 = SolveResult<f32>;
pub type SmoothedPowerF64 = prox::SmoothedPowerRegularizer<f64>;
pub type SmoothedPowerF32 = prox::SmoothedPowerRegularizer<f32>;
