//! Two-block linearized ADMM for `min r(x) + ‖y − v‖²/(2δ)  s.t.  Mx = y`.

use std::time::{Duration, Instant};

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::bench::CsInstance;
use crate::error::{Error, Result};
use crate::linalg::{norm, transpose_dot};
use crate::problem::IterateState;
use crate::prox::{prox_smoothed_power, SmoothedPowerRegularizer};
use crate::residuals::natural_map;
use crate::scalar::Real;
use crate::solver::{SolveOptions, SolveResult, SolveStatus, SolveTrace, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    YThenX,
    XThenY,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmParams<T> {
    /// Penalty `β_admm`.
    pub beta: T,
    /// Linearization step `η ≤ 1/(β_admm‖M‖²)`.
    pub eta: T,
    pub tol_p: T,
    pub tol_d: T,
    pub max_iter: usize,
    pub order: UpdateOrder,
    /// β used only to evaluate the natural map recorded in the trace.
    pub residual_beta: T,
}

impl<T: Real> AdmmParams<T> {
    /// `η = 0.99/(β‖M‖²)`; tolerances `1e-8·√(n + m)`; natural map measured at
    /// `0.9/‖[M, −I]‖`.
    pub fn for_instance(instance: &CsInstance<T>, beta: T) -> Result<Self> {
        let m_norm = instance.m_norm;
        let a_norm = instance.coupling_norm();
        let tol = T::lit(1e-8 * ((instance.m.nrows() + instance.m.ncols()) as f64).sqrt());
        Ok(AdmmParams {
            beta,
            eta: T::lit(0.99) / (beta * m_norm * m_norm),
            tol_p: tol,
            tol_d: tol,
            max_iter: 1000,
            order: UpdateOrder::YThenX,
            residual_beta: T::lit(0.9) / a_norm,
        })
    }

    pub fn validate(&self, m_norm: T) -> Result<()> {
        if !(self.beta > T::zero()) {
            return Err(Error::InvalidParameter("ADMM penalty must be positive".into()));
        }
        if !(self.eta > T::zero()) || self.eta * self.beta * m_norm * m_norm > T::one() {
            return Err(Error::InvalidParameter(format!(
                "linearization step η = {} exceeds 1/(β‖M‖²)",
                self.eta.to_f64_lossy()
            )));
        }
        Ok(())
    }
}

/// Runs ADMM from `init` (blocks `[x, y]`, multiplier `λ`; `ξ` is ignored).
pub fn admm_solve_cs<T: Real>(
    instance: &CsInstance<T>,
    reg: &SmoothedPowerRegularizer<T>,
    params: &AdmmParams<T>,
    init: IterateState<T>,
    opts: &SolveOptions<T>,
) -> Result<SolveResult<T>> {
    let m = &instance.m;
    let (rows, cols) = m.dim();
    if init.x.len() != 2 || init.x[0].len() != cols || init.x[1].len() != rows || init.lambda.len() != rows {
        return Err(Error::dim("ADMM initial state must hold x ∈ R^n, y ∈ R^m and λ ∈ R^m"));
    }
    params.validate(instance.m_norm)?;
    let problem = instance.problem(reg)?;
    let (beta, eta, delta) = (params.beta, params.eta, instance.delta);
    let v = &instance.v;

    let mut x = init.x[0].clone();
    let mut y = init.x[1].clone();
    let mut lambda = init.lambda.clone();
    let mut mx = m.dot(&x);
    // ∂r(x) element implied by the last prox step; the initial point uses the oracle.
    let mut xi_x = x.mapv(|t| reg.weight * crate::prox::smoothed_power_derivative(t, reg.q, reg.eps));

    let mut elapsed = Duration::ZERO;
    let mut trace = SolveTrace::default();
    let record = |k: usize, x: &Array1<T>, y: &Array1<T>, xi_x: &Array1<T>, lambda: &Array1<T>, mx: &Array1<T>, elapsed: Duration| -> Result<TraceRecord> {
        let xi_y = (y - v).mapv(|t| t / delta);
        let state = IterateState { x: vec![x.clone(), y.clone()], xi: vec![xi_x.clone(), xi_y], lambda: lambda.clone(), k };
        let bundle = natural_map(&state, &problem, params.residual_beta)?;
        Ok(TraceRecord {
            k,
            natural_norm: bundle.natural_norm.to_f64_lossy(),
            phi: None,
            psi: None,
            alpha: None,
            objective: problem.objective(&state.x).to_f64_lossy(),
            infeasibility: norm((mx - y).view()).to_f64_lossy(),
            time_ms: opts.record_time.then_some(elapsed.as_secs_f64() * 1e3),
            dist_ref: opts
                .reference
                .as_ref()
                .map(|w| norm((&state.w(params.residual_beta) - w).view()).to_f64_lossy()),
            monitor: opts.monitor.as_ref().map(|f| f(&state)),
        })
    };

    let mut k = 0usize;
    let status = loop {
        if k >= params.max_iter {
            trace.records.push(record(k, &x, &y, &xi_x, &lambda, &mx, elapsed)?);
            break SolveStatus::MaxIter;
        }
        trace.records.push(record(k, &x, &y, &xi_x, &lambda, &mx, elapsed)?);

        let t0 = Instant::now();
        let y_update = |mx: &Array1<T>, lambda: &Array1<T>| {
            let denom = T::one() / delta + beta;
            Array1::from_iter(
                v.iter().zip(lambda.iter().zip(mx.iter())).map(|(&vi, (&li, &mi))| (vi / delta - li + beta * mi) / denom),
            )
        };
        let x_update = |x: &Array1<T>, mx: &Array1<T>, y: &Array1<T>| -> Result<(Array1<T>, Array1<T>)> {
            let dual = (mx - y).mapv(|t| t * beta) - &lambda;
            let g = transpose_dot(m.view(), dual.view());
            let z = x - &g.mapv(|t| t * eta);
            let xn = prox_smoothed_power(z.view(), eta, reg)?;
            let xi = (&z - &xn).mapv(|t| t / eta);
            Ok((xn, xi))
        };
        let (x_new, y_new, xi_new, mx_new) = match params.order {
            UpdateOrder::YThenX => {
                let yn = y_update(&mx, &lambda);
                let (xn, xi) = x_update(&x, &mx, &yn)?;
                let mxn = m.dot(&xn);
                (xn, yn, xi, mxn)
            }
            UpdateOrder::XThenY => {
                let (xn, xi) = x_update(&x, &mx, &y)?;
                let mxn = m.dot(&xn);
                let yn = y_update(&mxn, &lambda);
                (xn, yn, xi, mxn)
            }
        };
        let lambda_new = &lambda - &(&mx_new - &y_new).mapv(|t| t * beta);
        let du = (norm((&x_new - &x).view()).powi(2) + norm((&y_new - &y).view()).powi(2)).sqrt();
        let dl = norm((&lambda_new - &lambda).view());
        elapsed += t0.elapsed();

        k += 1;
        x = x_new;
        y = y_new;
        xi_x = xi_new;
        lambda = lambda_new;
        mx = mx_new;
        let finite = x.iter().chain(y.iter()).chain(lambda.iter()).all(|t| t.is_finite());
        if !finite {
            break SolveStatus::Diverged;
        }
        if du <= params.tol_p && dl <= params.tol_d {
            let r = record(k, &x, &y, &xi_x, &lambda, &mx, elapsed)?;
            let converged = r.natural_norm <= problem_tol_e(&problem);
            trace.records.push(r);
            break if converged { SolveStatus::Converged } else { SolveStatus::StepTolerance };
        }
    };

    let xi_y = (&y - v).mapv(|t| t / delta);
    let state = IterateState { x: vec![x, y], xi: vec![xi_x, xi_y], lambda, k };
    Ok(SolveResult { state, status, trace, iterations: k })
}

fn problem_tol_e<T: Real>(problem: &crate::problem::ProblemInstance<T>) -> f64 {
    crate::problem::default_tolerances(problem).0.to_f64_lossy()
}
