//! Multi-block problem model: block functions, constraint sets, linear
//! coupling, solver parameters, iterate state and parameter validation.

use std::fmt;
use std::sync::Arc;

use ndarray::{s, Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm_estimate, BlockOperator};
use crate::scalar::Real;

/// Power-iteration count used when a coupling estimates its own norm.
pub const DEFAULT_POWER_ITERATIONS: usize = 100;
/// Multiplicative slack applied to the power-iteration estimate of `‖A‖`.
pub const NORM_INFLATION: f64 = 1.01;

/// One separable term `f_i` of the objective.
pub trait BlockFunction<T: Real>: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn value(&self, x: ArrayView1<T>) -> T;

    /// `argmin_y f(y) + ‖y − x‖² / (2β)`.
    fn prox(&self, x: ArrayView1<T>, beta: T) -> Result<Array1<T>>;

    /// Canonical element of `∂f(x)`, or `None` where the oracle has none to offer.
    fn subgradient(&self, x: ArrayView1<T>) -> Option<Array1<T>>;

    /// Weak convexity modulus `c_i`; `None` when unknown.
    fn weak_convexity(&self) -> Option<T>;

    /// True when `f` is differentiable everywhere, so the subgradient is the gradient.
    fn is_differentiable(&self) -> bool {
        false
    }

    /// True when `f` acts coordinatewise. Only separable functions may be
    /// combined with a box constraint.
    fn is_separable(&self) -> bool {
        false
    }
}

/// The set `X_i` a block is constrained to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConstraintSet<T> {
    Free,
    NonNegative,
    Box { lo: Vec<T>, hi: Vec<T> },
}

impl<T: Real> ConstraintSet<T> {
    /// Box set; infinite bounds are allowed.
    pub fn new_box(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::dim(format!("box bounds have lengths {} and {}", lo.len(), hi.len())));
        }
        if let Some(i) = lo.iter().zip(&hi).position(|(l, h)| l > h) {
            return Err(Error::InvalidSet(i));
        }
        Ok(ConstraintSet::Box { lo, hi })
    }

    pub fn is_free(&self) -> bool {
        match self {
            ConstraintSet::Free => true,
            ConstraintSet::NonNegative => false,
            ConstraintSet::Box { lo, hi } => {
                lo.iter().all(|l| l.is_infinite() && *l < T::zero())
                    && hi.iter().all(|h| h.is_infinite() && *h > T::zero())
            }
        }
    }

    pub fn project(&self, x: ArrayView1<T>) -> Array1<T> {
        match self {
            ConstraintSet::Free => x.to_owned(),
            ConstraintSet::NonNegative => x.mapv(|v| v.max(T::zero())),
            ConstraintSet::Box { lo, hi } => Array1::from_iter(
                x.iter().zip(lo.iter().zip(hi)).map(|(&v, (&l, &h))| v.max(l).min(h)),
            ),
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            ConstraintSet::Box { lo, .. } => Some(lo.len()),
            _ => None,
        }
    }
}

/// A block: its dimension, function and constraint set.
#[derive(Debug, Clone)]
pub struct Block<T: Real> {
    pub dim: usize,
    pub function: Arc<dyn BlockFunction<T>>,
    pub set: ConstraintSet<T>,
}

impl<T: Real> Block<T> {
    pub fn new(dim: usize, function: Arc<dyn BlockFunction<T>>) -> Self {
        Block { dim, function, set: ConstraintSet::Free }
    }

    pub fn with_set(mut self, set: ConstraintSet<T>) -> Self {
        self.set = set;
        self
    }

    /// Prox of `f + ι_X`. For constrained blocks this is the clamp of the
    /// unconstrained prox, exact for separable functions whose scalar prox
    /// subproblem is strongly convex.
    pub fn prox(&self, x: ArrayView1<T>, beta: T) -> Result<Array1<T>> {
        let p = self.function.prox(x, beta)?;
        Ok(if self.set.is_free() { p } else { self.set.project(p.view()) })
    }

    pub fn project(&self, x: ArrayView1<T>) -> Array1<T> {
        self.set.project(x)
    }
}

/// `Σ A_i x_i = b` together with a cached upper estimate of `‖[A_1 … A_m]‖`.
#[derive(Debug, Clone)]
pub struct LinearCoupling<T: Real> {
    pub blocks: Vec<BlockOperator<T>>,
    pub b: Array1<T>,
    pub norm_estimate: T,
}

impl<T: Real> LinearCoupling<T> {
    /// Estimates `‖A‖` by power iteration (seed 0) and inflates it by 1%.
    pub fn new(blocks: Vec<BlockOperator<T>>, b: Array1<T>) -> Result<Self> {
        let est = spectral_norm_estimate(&blocks, DEFAULT_POWER_ITERATIONS, 0)?;
        Ok(Self::with_norm(blocks, b, est * T::lit(NORM_INFLATION)))
    }

    /// Uses a caller-supplied upper bound for `‖A‖`.
    pub fn with_norm(blocks: Vec<BlockOperator<T>>, b: Array1<T>, norm_estimate: T) -> Self {
        LinearCoupling { blocks, b, norm_estimate }
    }

    pub fn rows(&self) -> usize {
        self.b.len()
    }

    /// `Σ A_i x_i`.
    pub fn apply(&self, x: &[Array1<T>]) -> Array1<T> {
        let mut out = Array1::zeros(self.rows());
        for (a, xi) in self.blocks.iter().zip(x) {
            out += &a.apply(xi.view());
        }
        out
    }

    /// `(A_1ᵀ y, …, A_mᵀ y)`.
    pub fn apply_transpose(&self, y: ArrayView1<T>) -> Vec<Array1<T>> {
        self.blocks.iter().map(|a| a.apply_transpose(y)).collect()
    }

    /// `Σ A_i x_i − b`.
    pub fn residual(&self, x: &[Array1<T>]) -> Array1<T> {
        self.apply(x) - &self.b
    }
}

/// `min Σ f_i(x_i)  s.t.  Σ A_i x_i = b,  x_i ∈ X_i`.
#[derive(Debug, Clone)]
pub struct ProblemInstance<T: Real> {
    pub blocks: Vec<Block<T>>,
    pub coupling: LinearCoupling<T>,
}

impl<T: Real> ProblemInstance<T> {
    pub fn new(blocks: Vec<Block<T>>, coupling: LinearCoupling<T>) -> Self {
        ProblemInstance { blocks, coupling }
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }

    /// `c_0 = max_i c_i`, or `None` if some block leaves its modulus unset.
    pub fn max_weak_convexity(&self) -> Option<T> {
        self.blocks
            .iter()
            .map(|b| b.function.weak_convexity())
            .try_fold(T::zero(), |acc, c| c.map(|c| acc.max(c)))
    }

    pub fn objective(&self, x: &[Array1<T>]) -> T {
        self.blocks.iter().zip(x).map(|(b, xi)| b.function.value(xi.view())).sum()
    }

    /// Structural check used by every entry point that touches state vectors.
    pub fn check_state(&self, state: &IterateState<T>) -> Result<()> {
        if state.x.len() != self.blocks.len() || state.xi.len() != self.blocks.len() {
            return Err(Error::dim(format!(
                "state has {} primal and {} subgradient blocks, problem has {}",
                state.x.len(),
                state.xi.len(),
                self.blocks.len()
            )));
        }
        for (i, (b, (x, xi))) in self.blocks.iter().zip(state.x.iter().zip(&state.xi)).enumerate() {
            if x.len() != b.dim || xi.len() != b.dim {
                return Err(Error::dim(format!("block {i}: expected dimension {}", b.dim)));
            }
        }
        if state.lambda.len() != self.coupling.rows() {
            return Err(Error::dim(format!(
                "multiplier has length {}, coupling has {} rows",
                state.lambda.len(),
                self.coupling.rows()
            )));
        }
        Ok(())
    }
}

/// Parameters of one DDRSM run. `β` is held fixed for the whole solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams<T> {
    pub beta: T,
    pub rho: T,
    pub max_iter: usize,
    pub tol_e: T,
    pub tol_p: T,
    pub tol_d: T,
    pub seed: u64,
    /// Run the block updates on the rayon pool.
    pub parallel: bool,
    /// Iterations without a relative natural-map decrease of 1e-12 before
    /// the run is declared stalled.
    pub stall_window: usize,
}

impl<T: Real> SolverParams<T> {
    /// `β = 0.9 ×` the admissible-range endpoint (τ-term omitted), `ρ = 1`,
    /// `tol_E = 1e-6·√(n+l)`, `tol_p = tol_d = 1e-8·√n`.
    pub fn defaults_for(problem: &ProblemInstance<T>) -> Result<Self> {
        let upper = beta_admissible_range(problem, None)?;
        let beta = if upper.is_finite() { T::lit(0.9) * upper } else { T::one() };
        let (tol_e, tol_p) = default_tolerances(problem);
        Ok(SolverParams {
            beta,
            rho: T::one(),
            max_iter: 1000,
            tol_e,
            tol_p,
            tol_d: tol_p,
            seed: 0,
            parallel: false,
            stall_window: 200,
        })
    }

    pub fn with_beta(mut self, beta: T) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_rho(mut self, rho: T) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

/// `(tol_E, tol_p)` scaled with the problem size.
pub fn default_tolerances<T: Real>(problem: &ProblemInstance<T>) -> (T, T) {
    let n = problem.total_dim() as f64;
    let l = problem.coupling.rows() as f64;
    (T::lit(1e-6 * (n + l).sqrt()), T::lit(1e-8 * n.sqrt()))
}

/// Primal blocks `x_i`, subgradients `ξ_i ∈ ∂f_i(x_i)`, multiplier `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState<T> {
    pub x: Vec<Array1<T>>,
    pub xi: Vec<Array1<T>>,
    pub lambda: Array1<T>,
    pub k: usize,
}

impl<T: Real> IterateState<T> {
    pub fn zeros(problem: &ProblemInstance<T>) -> Self {
        IterateState {
            x: problem.blocks.iter().map(|b| Array1::zeros(b.dim)).collect(),
            xi: problem.blocks.iter().map(|b| Array1::zeros(b.dim)).collect(),
            lambda: Array1::zeros(problem.coupling.rows()),
            k: 0,
        }
    }

    /// Stacked `w = (x + βξ, λ)`.
    pub fn w(&self, beta: T) -> Array1<T> {
        let n: usize = self.x.iter().map(|b| b.len()).sum();
        let mut w = Array1::zeros(n + self.lambda.len());
        let mut off = 0;
        for (x, xi) in self.x.iter().zip(&self.xi) {
            let d = x.len();
            w.slice_mut(s![off..off + d]).assign(&(x + &xi.mapv(|v| v * beta)));
            off += d;
        }
        w.slice_mut(s![off..]).assign(&self.lambda);
        w
    }

    /// Recovers the state from `w` via `x_i = prox_{βf_i}(w_i)` and
    /// `ξ_i = (w_i − x_i)/β`, the inverse of [`IterateState::w`] whenever
    /// `ξ_i` is the subgradient selected by the prox.
    pub fn from_w(problem: &ProblemInstance<T>, w: ArrayView1<T>, beta: T, k: usize) -> Result<Self> {
        let n = problem.total_dim();
        if w.len() != n + problem.coupling.rows() {
            return Err(Error::dim(format!("w has length {}, expected {}", w.len(), n + problem.coupling.rows())));
        }
        let mut x = Vec::with_capacity(problem.num_blocks());
        let mut xi = Vec::with_capacity(problem.num_blocks());
        let mut off = 0;
        for b in &problem.blocks {
            let wi = w.slice(s![off..off + b.dim]);
            let xb = b.prox(wi, beta)?;
            xi.push((&wi - &xb).mapv(|v| v / beta));
            x.push(xb);
            off += b.dim;
        }
        Ok(IterateState { x, xi, lambda: w.slice(s![n..]).to_owned(), k })
    }

    /// Stacked primal vector.
    pub fn x_stacked(&self) -> Array1<T> {
        stack(&self.x)
    }
}

pub(crate) fn stack<T: Real>(blocks: &[Array1<T>]) -> Array1<T> {
    Array1::from_iter(blocks.iter().flat_map(|b| b.iter().copied()))
}

/// Violated preconditions; empty means the instance is runnable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    /// Conditions outside the convergence theory that do not block a run.
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(self.violations.join("; ")))
        }
    }
}

pub fn validate_problem<T: Real>(problem: &ProblemInstance<T>, params: &SolverParams<T>) -> ValidationReport {
    let mut v = Vec::new();
    let mut warn = Vec::new();
    let c = &problem.coupling;

    if problem.blocks.is_empty() {
        v.push("problem has no blocks".to_string());
    }
    if c.blocks.len() != problem.blocks.len() {
        v.push(format!(
            "dimension mismatch: {} coupling blocks for {} function blocks",
            c.blocks.len(),
            problem.blocks.len()
        ));
    }
    for (i, (blk, a)) in problem.blocks.iter().zip(&c.blocks).enumerate() {
        if blk.dim == 0 {
            v.push(format!("block {i} has dimension 0"));
        }
        if a.cols() != blk.dim {
            v.push(format!("dimension mismatch: A_{i} has {} columns, block {i} has dimension {}", a.cols(), blk.dim));
        }
        if a.rows() != c.rows() {
            v.push(format!("dimension mismatch: A_{i} has {} rows, b has length {}", a.rows(), c.rows()));
        }
        if let Some(d) = blk.set.dim() {
            if d != blk.dim {
                v.push(format!("dimension mismatch: box for block {i} has length {d}"));
            }
        }
        if !blk.set.is_free() && !blk.function.is_separable() {
            v.push(format!(
                "block {i}: constraint sets are only supported for separable functions ({} is not)",
                blk.function.name()
            ));
        }
        match blk.function.weak_convexity() {
            None => v.push(format!("weak convexity modulus c_{i} unset")),
            Some(ci) if !(ci >= T::zero()) || !ci.is_finite() => {
                v.push(format!("weak convexity modulus c_{i} invalid ({})", ci.to_f64_lossy()))
            }
            Some(ci) if ci * params.beta >= T::one() => warn.push(format!(
                "β·c_{i} = {} ≥ 1: prox subproblem of block {i} is not strongly convex",
                (ci * params.beta).to_f64_lossy()
            )),
            _ => {}
        }
    }

    if !(params.beta > T::zero()) || !params.beta.is_finite() {
        v.push("β must be positive".to_string());
    } else if params.beta * c.norm_estimate >= T::one() {
        v.push(format!(
            "β exceeds 1/‖A‖ (hypothesis 0 < β < 1/‖A‖ violated: β·‖A‖ = {})",
            (params.beta * c.norm_estimate).to_f64_lossy()
        ));
    } else if let Ok(upper) = beta_admissible_range(problem, None) {
        if params.beta >= upper {
            warn.push(format!(
                "β = {} lies outside the convergence range (0, {})",
                params.beta.to_f64_lossy(),
                upper.to_f64_lossy()
            ));
        }
    }
    if !(params.rho > T::zero() && params.rho < T::lit(2.0)) {
        v.push("ρ must lie in (0,2)".to_string());
    }
    if params.max_iter == 0 {
        v.push("max iterations must be positive".to_string());
    }
    for (name, t) in [("tol_E", params.tol_e), ("tol_p", params.tol_p), ("tol_d", params.tol_d)] {
        if !(t > T::zero()) {
            v.push(format!("{name} must be positive"));
        }
    }
    ValidationReport { violations: v, warnings: warn }
}

/// Upper endpoint of `(0, min(1/(2c₀), 1/(‖A‖+c₀), 2/(‖A‖+2c₀τ²)))`.
pub fn beta_upper_bound<T: Real>(c0: T, norm_a: T, tau: T) -> Result<T> {
    if !(c0 >= T::zero()) || !c0.is_finite() {
        return Err(Error::InvalidModulus(c0.to_f64_lossy()));
    }
    if !(tau > T::zero()) {
        return Err(Error::InvalidParameter("τ must be positive".into()));
    }
    let two = T::lit(2.0);
    let inv = |d: T| if d > T::zero() { T::one() / d } else { T::infinity() };
    let a = inv(two * c0);
    let b = inv(norm_a + c0);
    let c = two * inv(norm_a + two * c0 * tau * tau);
    Ok(a.min(b).min(c))
}

/// Upper endpoint of the admissible β interval for `problem`; `tau` defaults to 1.
pub fn beta_admissible_range<T: Real>(problem: &ProblemInstance<T>, tau: Option<T>) -> Result<T> {
    let c0 = problem
        .max_weak_convexity()
        .ok_or_else(|| Error::InvalidParameter("weak convexity modulus unset".into()))?;
    beta_upper_bound(c0, problem.coupling.norm_estimate, tau.unwrap_or(T::one()))
}
