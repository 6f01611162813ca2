//! The DDRSM iteration, its solve loop and trace recording.

use std::fmt;
use std::io;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::problem::{validate_problem, IterateState, ProblemInstance, SolverParams};
use crate::residuals::{natural_map_lean, natural_map_with, step_size, verify_step_bounds, ResidualBundle, StepSizeBundle};
use crate::scalar::Real;

/// Relative natural-map decrease that counts as progress for stall detection.
const STALL_REL_DECREASE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// `‖E_β‖ ≤ tol_E`.
    Converged,
    /// Successive iterates moved less than `tol_p` (primal) and `tol_d` (dual).
    StepTolerance,
    MaxIter,
    Stalled,
    Diverged,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::StepTolerance => "step_tolerance",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Stalled => "stalled",
            SolveStatus::Diverged => "diverged",
        }
    }

    /// Either termination test of the solve loop fired.
    pub fn terminated_normally(self) -> bool {
        matches!(self, SolveStatus::Converged | SolveStatus::StepTolerance)
    }
}

/// One trace row. Step-size fields are absent on the final row of a run and
/// for solvers without a step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub natural_norm: f64,
    pub phi: Option<f64>,
    pub psi: Option<f64>,
    pub alpha: Option<f64>,
    pub objective: f64,
    pub infeasibility: f64,
    pub time_ms: Option<f64>,
    pub dist_ref: Option<f64>,
    /// Value of the caller's monitor at this iterate; not part of the CSV schema.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitor: Option<f64>,
}

pub const TRACE_COLUMNS: [&str; 9] = ["k", "E_norm", "phi", "psi", "alpha", "objective", "infeas", "time_ms", "dist_ref"];

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| Error::Config(format!("not a number in trace: {s:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
}

impl SolveTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_COLUMNS)?;
        for r in &self.records {
            w.write_record([
                r.k.to_string(),
                fmt_f64(r.natural_norm),
                fmt_opt(r.phi),
                fmt_opt(r.psi),
                fmt_opt(r.alpha),
                fmt_f64(r.objective),
                fmt_f64(r.infeasibility),
                fmt_opt(r.time_ms),
                fmt_opt(r.dist_ref),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Numeric(e.to_string()))
    }

    pub fn read_csv<R: io::Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header = rd.headers()?.clone();
        if header.iter().ne(TRACE_COLUMNS) {
            return Err(Error::Config(format!("unexpected trace header: {:?}", header.iter().collect::<Vec<_>>())));
        }
        let mut records = Vec::new();
        for row in rd.records() {
            let row = row?;
            let num = |i: usize| -> Result<f64> {
                parse_opt(&row[i])?.ok_or_else(|| Error::Config(format!("missing {} in trace row", TRACE_COLUMNS[i])))
            };
            records.push(TraceRecord {
                k: row[0].parse().map_err(|_| Error::Config(format!("bad iteration index {:?}", &row[0])))?,
                natural_norm: num(1)?,
                phi: parse_opt(&row[2])?,
                psi: parse_opt(&row[3])?,
                alpha: parse_opt(&row[4])?,
                objective: num(5)?,
                infeasibility: num(6)?,
                time_ms: parse_opt(&row[7])?,
                dist_ref: parse_opt(&row[8])?,
                monitor: None,
            });
        }
        Ok(SolveTrace { records })
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult<T> {
    pub state: IterateState<T>,
    pub status: SolveStatus,
    pub trace: SolveTrace,
    /// Iterations performed (updates applied).
    pub iterations: usize,
}

/// Scalar evaluated on every recorded iterate, e.g. PSNR against a known truth.
pub type Monitor<T> = Arc<dyn Fn(&IterateState<T>) -> f64 + Send + Sync>;

/// Optional instrumentation of a solve. Instrumentation is excluded from `time_ms`.
#[derive(Clone)]
pub struct SolveOptions<T> {
    /// Reference `w*` for the `dist_ref` column, built with the same β.
    pub reference: Option<Array1<T>>,
    /// Fill the `time_ms` column. Off by default so traces are reproducible byte for byte.
    pub record_time: bool,
    /// Fail with [`Error::BoundViolation`] if a step-size bound is violated.
    pub enforce_bounds: bool,
    pub monitor: Option<Monitor<T>>,
}

impl<T> Default for SolveOptions<T> {
    fn default() -> Self {
        SolveOptions { reference: None, record_time: false, enforce_bounds: true, monitor: None }
    }
}

impl<T: fmt::Debug> fmt::Debug for SolveOptions<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SolveOptions")
            .field("reference", &self.reference)
            .field("record_time", &self.record_time)
            .field("enforce_bounds", &self.enforce_bounds)
            .field("monitor", &self.monitor.is_some())
            .finish()
    }
}

/// `x_i = P_{X_i}(0)`, `λ = 0`, `ξ_i` the subgradient oracle's element at `x_i`.
pub fn default_init<T: Real>(problem: &ProblemInstance<T>) -> Result<IterateState<T>> {
    let mut x = Vec::with_capacity(problem.num_blocks());
    let mut xi = Vec::with_capacity(problem.num_blocks());
    for (i, b) in problem.blocks.iter().enumerate() {
        let x0 = b.project(Array1::zeros(b.dim).view());
        let g = b.function.subgradient(x0.view()).ok_or(Error::Initialization(i))?;
        if g.len() != b.dim || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Initialization(i));
        }
        x.push(x0);
        xi.push(g);
    }
    Ok(IterateState { x, xi, lambda: Array1::zeros(problem.coupling.rows()), k: 0 })
}

/// Applies the update for a bundle and step already computed at `state`.
pub fn apply_step<T: Real>(
    state: &IterateState<T>,
    problem: &ProblemInstance<T>,
    params: &SolverParams<T>,
    bundle: &ResidualBundle<T>,
    step: &StepSizeBundle<T>,
) -> Result<IterateState<T>> {
    let beta = params.beta;
    let ra = params.rho * step.alpha;
    let update = |i: usize| -> Result<(Array1<T>, Array1<T>)> {
        let x = &state.x[i];
        let shift = bundle.e_x_bar[i].mapv(|v| v * ra);
        let z = &(x + &state.xi[i].mapv(|v| v * beta)) - &shift;
        let x_new = problem.blocks[i].prox(z.view(), beta)?;
        let xi_new = &state.xi[i] + &(&(x - &x_new) - &shift).mapv(|v| v / beta);
        Ok((x_new, xi_new))
    };
    let blocks: Vec<Result<(Array1<T>, Array1<T>)>> = if params.parallel {
        (0..problem.num_blocks()).into_par_iter().map(update).collect()
    } else {
        (0..problem.num_blocks()).map(update).collect()
    };
    let mut x = Vec::with_capacity(blocks.len());
    let mut xi = Vec::with_capacity(blocks.len());
    for b in blocks {
        let (a, g) = b?;
        x.push(a);
        xi.push(g);
    }
    let lambda = &state.lambda - &step.dual_direction.mapv(|v| v * ra);
    Ok(IterateState { x, xi, lambda, k: state.k + 1 })
}

/// One DDRSM iteration from `state`. Returns [`Error::AtSolution`] when the
/// natural map vanishes.
pub fn ddrsm_iterate<T: Real>(
    state: &IterateState<T>,
    problem: &ProblemInstance<T>,
    params: &SolverParams<T>,
) -> Result<(IterateState<T>, ResidualBundle<T>, StepSizeBundle<T>)> {
    let bundle = natural_map_with(state, problem, params.beta, params.parallel)?;
    if bundle.natural_norm == T::zero() {
        return Err(Error::AtSolution);
    }
    let step = step_size(&bundle, params.beta, &problem.coupling)?;
    let next = apply_step(state, problem, params, &bundle, &step)?;
    Ok((next, bundle, step))
}

pub fn ddrsm_solve<T: Real>(
    problem: &ProblemInstance<T>,
    params: &SolverParams<T>,
    init: IterateState<T>,
) -> Result<SolveResult<T>> {
    ddrsm_solve_with(problem, params, init, &SolveOptions::default())
}

fn all_finite<T: Real>(s: &IterateState<T>) -> bool {
    s.x.iter().chain(&s.xi).all(|b| b.iter().all(|v| v.is_finite())) && s.lambda.iter().all(|v| v.is_finite())
}

fn block_diff_norm<T: Real>(a: &[Array1<T>], b: &[Array1<T>]) -> T {
    a.iter().zip(b).map(|(u, v)| (u - v).mapv(|d| d * d).sum()).sum::<T>().sqrt()
}

pub fn ddrsm_solve_with<T: Real>(
    problem: &ProblemInstance<T>,
    params: &SolverParams<T>,
    init: IterateState<T>,
    opts: &SolveOptions<T>,
) -> Result<SolveResult<T>> {
    validate_problem(problem, params).into_result()?;
    problem.check_state(&init)?;
    let beta = params.beta;
    let mut elapsed = Duration::ZERO;
    let mut trace = SolveTrace::default();
    let mut state = init;
    let mut best = T::infinity();
    let mut last_improvement = 0usize;
    let mut iterations = 0usize;

    let record = |state: &IterateState<T>,
                  bundle: &ResidualBundle<T>,
                  step: Option<&StepSizeBundle<T>>,
                  elapsed: Duration| {
        let infeas = norm(bundle.e_lambda.view()) / beta;
        TraceRecord {
            k: state.k,
            natural_norm: bundle.natural_norm.to_f64_lossy(),
            phi: step.map(|s| s.phi.to_f64_lossy()),
            psi: step.map(|s| s.psi.to_f64_lossy()),
            alpha: step.map(|s| s.alpha.to_f64_lossy()),
            objective: problem.objective(&state.x).to_f64_lossy(),
            infeasibility: infeas.to_f64_lossy(),
            time_ms: opts.record_time.then_some(elapsed.as_secs_f64() * 1e3),
            dist_ref: opts
                .reference
                .as_ref()
                .map(|w| norm((&state.w(beta) - w).view()).to_f64_lossy()),
            monitor: opts.monitor.as_ref().map(|m| m(state)),
        }
    };

    let t0 = Instant::now();
    let mut bundle = natural_map_lean(&state, problem, beta, params.parallel)?;
    elapsed += t0.elapsed();

    let status = loop {
        let nn = bundle.natural_norm;
        if !nn.is_finite() {
            trace.records.push(record(&state, &bundle, None, elapsed));
            break SolveStatus::Diverged;
        }
        if nn <= params.tol_e {
            trace.records.push(record(&state, &bundle, None, elapsed));
            break SolveStatus::Converged;
        }
        if iterations >= params.max_iter {
            trace.records.push(record(&state, &bundle, None, elapsed));
            break SolveStatus::MaxIter;
        }
        if nn < best * T::lit(1.0 - STALL_REL_DECREASE) {
            best = nn;
            last_improvement = iterations;
        } else if iterations - last_improvement >= params.stall_window {
            trace.records.push(record(&state, &bundle, None, elapsed));
            break SolveStatus::Stalled;
        }

        let t0 = Instant::now();
        let step = step_size(&bundle, beta, &problem.coupling)?;
        let step_time = t0.elapsed();
        if opts.enforce_bounds {
            verify_step_bounds(&step, &bundle, beta, problem.coupling.norm_estimate, iterations)?;
        }
        trace.records.push(record(&state, &bundle, Some(&step), elapsed));

        let t0 = Instant::now();
        let next = apply_step(&state, problem, params, &bundle, &step)?;
        iterations += 1;
        if !all_finite(&next) {
            break SolveStatus::Diverged;
        }
        let dx = block_diff_norm(&state.x, &next.x);
        let dl = norm((&state.lambda - &next.lambda).view());
        state = next;
        bundle = natural_map_lean(&state, problem, beta, params.parallel)?;
        elapsed += step_time + t0.elapsed();
        if dx <= params.tol_p && dl <= params.tol_d {
            trace.records.push(record(&state, &bundle, None, elapsed));
            break if bundle.natural_norm <= params.tol_e { SolveStatus::Converged } else { SolveStatus::StepTolerance };
        }
    };

    Ok(SolveResult { state, status, trace, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::BlockOperator;
    use crate::problem::{Block, LinearCoupling};
    use crate::prox::DiagQuadratic;
    use ndarray::{array, Array2};
    use std::sync::Arc;

    fn one_dim() -> ProblemInstance<f64> {
        let f = DiagQuadratic { h: array![1.0], g: array![0.0] };
        let coupling = LinearCoupling::with_norm(vec![BlockOperator::Dense(Array2::eye(1))], array![0.0], 1.0);
        ProblemInstance::new(vec![Block::new(1, Arc::new(f))], coupling)
    }

    fn params() -> SolverParams<f64> {
        SolverParams {
            beta: 0.5,
            rho: 1.0,
            max_iter: 500,
            tol_e: 1e-12,
            tol_p: 1e-300,
            tol_d: 1e-300,
            seed: 0,
            parallel: false,
            stall_window: 200,
        }
    }

    #[test]
    fn one_step_matches_compact_form() {
        let p = one_dim();
        let s = IterateState { x: vec![array![1.0]], xi: vec![array![1.0]], lambda: array![0.0], k: 0 };
        let (next, bundle, step) = ddrsm_iterate(&s, &p, &params()).unwrap();
        let d = crate::residuals::direction(&bundle, 0.5, &p.coupling);
        let expect = &s.w(0.5) - &(&d * step.alpha);
        assert!((&next.w(0.5) - &expect).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn solves_one_dim() {
        let p = one_dim();
        let r = ddrsm_solve(&p, &params(), default_init(&p).unwrap()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
    }

    #[test]
    fn starts_at_solution() {
        let p = one_dim();
        let r = ddrsm_solve(&p, &params(), IterateState::zeros(&p)).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn csv_round_trip() {
        let p = one_dim();
        let s = IterateState { x: vec![array![1.0]], xi: vec![array![1.0]], lambda: array![0.0], k: 0 };
        let r = ddrsm_solve(&p, &params(), s).unwrap();
        let text = r.trace.to_csv_string().unwrap();
        assert!(text.starts_with("k,E_norm,phi,psi,alpha,objective,infeas,time_ms,dist_ref\n"));
        let back = SolveTrace::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, r.trace);
    }
}
