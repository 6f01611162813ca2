//! Natural map, λ-predictor, corrected residuals, step size and direction.

use ndarray::Array1;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem::{stack, IterateState, LinearCoupling, ProblemInstance};
use crate::scalar::Real;

/// Relative tolerance applied to the step-size bound assertions.
pub const BOUND_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBundle<T> {
    /// `x − P_X(x − β(ξ − Aᵀλ))`, kept for diagnostics only.
    pub e_x: Vec<Array1<T>>,
    /// `β(Ax − b)`.
    pub e_lambda: Array1<T>,
    /// `λ − e_λ`.
    pub lambda_bar: Array1<T>,
    /// `x − P_X(x − β(ξ − Aᵀλ̄))`.
    pub e_x_bar: Vec<Array1<T>>,
    /// `√(‖ē_x‖² + ‖e_λ‖²)`.
    pub natural_norm: T,
}

impl<T: Real> ResidualBundle<T> {
    pub fn e_x_bar_norm_sq(&self) -> T {
        self.e_x_bar.iter().map(|b| b.dot(b)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSizeBundle<T> {
    pub phi: T,
    pub psi: T,
    pub alpha: T,
    /// `⟨e_λ, Aē_x⟩`, shared by `φ` and `ψ`.
    pub cross: T,
    /// Multiplier component of the direction, `e_λ − βAē_x`.
    pub dual_direction: Array1<T>,
}

fn block_residual<T: Real>(
    problem: &ProblemInstance<T>,
    state: &IterateState<T>,
    i: usize,
    beta: T,
    at_lambda: &Array1<T>,
) -> Array1<T> {
    let blk = &problem.blocks[i];
    let atl = problem.coupling.blocks[i].apply_transpose(at_lambda.view());
    let x = &state.x[i];
    let inner = x - &((&state.xi[i] - &atl).mapv(|v| v * beta));
    x - &blk.project(inner.view())
}

/// Evaluates the natural map at `(x, ξ, λ)`.
pub fn natural_map<T: Real>(state: &IterateState<T>, problem: &ProblemInstance<T>, beta: T) -> Result<ResidualBundle<T>> {
    natural_map_with(state, problem, beta, false)
}

/// As [`natural_map`], optionally computing the per-block pieces on the rayon
/// pool. Reductions always run serially in block order.
pub fn natural_map_with<T: Real>(
    state: &IterateState<T>,
    problem: &ProblemInstance<T>,
    beta: T,
    parallel: bool,
) -> Result<ResidualBundle<T>> {
    natural_map_impl(state, problem, beta, parallel, true)
}

/// Skips `e_x`, which the iteration itself never uses; the returned bundle
/// has an empty `e_x`.
pub(crate) fn natural_map_lean<T: Real>(
    state: &IterateState<T>,
    problem: &ProblemInstance<T>,
    beta: T,
    parallel: bool,
) -> Result<ResidualBundle<T>> {
    natural_map_impl(state, problem, beta, parallel, false)
}

fn natural_map_impl<T: Real>(
    state: &IterateState<T>,
    problem: &ProblemInstance<T>,
    beta: T,
    parallel: bool,
    with_e_x: bool,
) -> Result<ResidualBundle<T>> {
    problem.check_state(state)?;
    let e_lambda = problem.coupling.residual(&state.x).mapv(|v| v * beta);
    let lambda_bar = &state.lambda - &e_lambda;

    let per_block = |i: usize| {
        (
            if with_e_x { block_residual(problem, state, i, beta, &state.lambda) } else { Array1::zeros(0) },
            block_residual(problem, state, i, beta, &lambda_bar),
        )
    };
    let pieces: Vec<(Array1<T>, Array1<T>)> = if parallel {
        (0..problem.num_blocks()).into_par_iter().map(per_block).collect()
    } else {
        (0..problem.num_blocks()).map(per_block).collect()
    };
    let (mut e_x, e_x_bar): (Vec<_>, Vec<_>) = pieces.into_iter().unzip();
    if !with_e_x {
        e_x.clear();
    }

    let ebar_sq: T = e_x_bar.iter().map(|b| b.dot(b)).sum();
    let natural_norm = (ebar_sq + e_lambda.dot(&e_lambda)).sqrt();
    Ok(ResidualBundle { e_x, e_lambda, lambda_bar, e_x_bar, natural_norm })
}

/// `φ = ‖ē‖² + ‖e_λ‖² − β⟨e_λ, Aē⟩`, `ψ = ‖ē‖² + ‖e_λ − βAē‖²`, `α = φ/ψ`.
pub fn step_size<T: Real>(bundle: &ResidualBundle<T>, beta: T, coupling: &LinearCoupling<T>) -> Result<StepSizeBundle<T>> {
    if bundle.natural_norm == T::zero() {
        return Err(Error::AtSolution);
    }
    let a_e = coupling.apply(&bundle.e_x_bar);
    let ebar_sq = bundle.e_x_bar_norm_sq();
    let el_sq = bundle.e_lambda.dot(&bundle.e_lambda);
    let cross = bundle.e_lambda.dot(&a_e);
    let dual_direction = &bundle.e_lambda - &a_e.mapv(|v| v * beta);
    let phi = ebar_sq + el_sq - beta * cross;
    let psi = ebar_sq + dual_direction.dot(&dual_direction);
    if !(psi > T::zero()) {
        return Err(Error::Numeric(format!(
            "ψ = {} with nonzero natural map",
            psi.to_f64_lossy()
        )));
    }
    Ok(StepSizeBundle { phi, psi, alpha: phi / psi, cross, dual_direction })
}

/// Stacked `d_β = (ē_{x_1}, …, ē_{x_m}, e_λ − βAē_x)`.
pub fn direction<T: Real>(bundle: &ResidualBundle<T>, beta: T, coupling: &LinearCoupling<T>) -> Array1<T> {
    let a_e = coupling.apply(&bundle.e_x_bar);
    let dual = &bundle.e_lambda - &a_e.mapv(|v| v * beta);
    let mut d = stack(&bundle.e_x_bar).to_vec();
    d.extend(dual.iter().copied());
    Array1::from_vec(d)
}

/// Theoretical bounds for `β‖A‖ < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepBounds<T> {
    pub alpha_lo: T,
    pub alpha_hi: T,
    pub phi_lo: T,
    pub phi_hi: T,
}

/// `α ∈ (1/2, (2+β‖A‖)/(2(1−β‖A‖))]` and `φ/‖E‖² ∈ [(2−β‖A‖)/2, (2+β‖A‖)/2]`;
/// `None` when `β‖A‖ ≥ 1`.
pub fn step_bounds<T: Real>(beta: T, norm_a: T) -> Option<StepBounds<T>> {
    let t = beta * norm_a;
    if !(t < T::one()) {
        return None;
    }
    let two = T::lit(2.0);
    Some(StepBounds {
        alpha_lo: T::lit(0.5),
        alpha_hi: (two + t) / (two * (T::one() - t)),
        phi_lo: (two - t) / two,
        phi_hi: (two + t) / two,
    })
}

/// Checks the step-size and `φ`-sandwich bounds with relative slack [`BOUND_TOL`].
pub fn verify_step_bounds<T: Real>(
    step: &StepSizeBundle<T>,
    bundle: &ResidualBundle<T>,
    beta: T,
    norm_a: T,
    iteration: usize,
) -> Result<()> {
    let Some(b) = step_bounds(beta, norm_a) else {
        return Ok(());
    };
    let tol = T::lit(BOUND_TOL);
    let e2 = bundle.natural_norm * bundle.natural_norm;
    let fail = |detail: String| Err(Error::BoundViolation { iteration, detail });
    let f = |v: T| v.to_f64_lossy();
    if !(step.alpha > b.alpha_lo * (T::one() - tol)) {
        return fail(format!("α = {} not above 1/2", f(step.alpha)));
    }
    if !(step.alpha <= b.alpha_hi * (T::one() + tol)) {
        return fail(format!("α = {} exceeds {}", f(step.alpha), f(b.alpha_hi)));
    }
    if !(step.phi >= b.phi_lo * e2 * (T::one() - tol)) {
        return fail(format!("φ = {} below {}·‖E‖² = {}", f(step.phi), f(b.phi_lo), f(b.phi_lo * e2)));
    }
    if !(step.phi <= b.phi_hi * e2 * (T::one() + tol)) {
        return fail(format!("φ = {} above {}·‖E‖² = {}", f(step.phi), f(b.phi_hi), f(b.phi_hi * e2)));
    }
    Ok(())
}
