//! Post-processing of solver traces against a certified reference point.

use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{IterateState, ProblemInstance};
use crate::residuals::natural_map;
use crate::scalar::Real;
use crate::solver::SolveTrace;

/// Natural-map norm a reference must reach to be accepted.
pub const CERTIFY_TOL: f64 = 1e-10;
/// Distances below this are treated as numerical zero by the rate fit.
pub const DIST_FLOOR: f64 = 1e-14;
pub const MIN_TAIL_POINTS: usize = 20;
pub const FEJER_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    OracleSolved,
}

/// A KKT point `(x*, ξ*, λ*)` whose natural map vanishes to [`CERTIFY_TOL`],
/// together with its stacked form `w* = (x* + βξ*, λ*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution<T> {
    pub state: IterateState<T>,
    pub w: Array1<T>,
    pub beta: T,
    pub provenance: Provenance,
    pub kkt_norm: T,
}

impl<T: Real> ReferenceSolution<T> {
    pub fn certify(state: IterateState<T>, problem: &ProblemInstance<T>, beta: T, provenance: Provenance) -> Result<Self> {
        let kkt_norm = kkt_certify(&state, problem, beta)?;
        if !(kkt_norm <= T::lit(CERTIFY_TOL)) {
            return Err(Error::Diagnostic(format!(
                "reference not certified: natural map norm {:e} exceeds {CERTIFY_TOL:e}",
                kkt_norm.to_f64_lossy()
            )));
        }
        let w = state.w(beta);
        Ok(ReferenceSolution { state, w, beta, provenance, kkt_norm })
    }

    /// Builds `ξ_i* = A_iᵀλ*` from a primal-dual pair, which is the KKT
    /// subgradient for unconstrained blocks, and certifies the result.
    pub fn from_primal_dual(
        problem: &ProblemInstance<T>,
        x: Vec<Array1<T>>,
        lambda: Array1<T>,
        beta: T,
        provenance: Provenance,
    ) -> Result<Self> {
        let xi = problem.coupling.apply_transpose(lambda.view());
        Self::certify(IterateState { x, xi, lambda, k: 0 }, problem, beta, provenance)
    }

    pub fn to_file(&self) -> ReferenceFile {
        ReferenceFile {
            provenance: self.provenance,
            beta: self.beta.to_f64_lossy(),
            kkt_norm: self.kkt_norm.to_f64_lossy(),
            w: self.w.iter().map(|v| v.to_f64_lossy()).collect(),
        }
    }
}

/// JSON form of a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFile {
    pub provenance: Provenance,
    pub beta: f64,
    pub kkt_norm: f64,
    pub w: Vec<f64>,
}

impl ReferenceFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Natural-map norm at `state`; zero exactly at KKT points.
pub fn kkt_certify<T: Real>(state: &IterateState<T>, problem: &ProblemInstance<T>, beta: T) -> Result<T> {
    Ok(natural_map(state, problem, beta)?.natural_norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// `Ĉ_q = exp(slope)` of `log dist_k` against `k`.
    pub rate: f64,
    pub r_squared: f64,
    /// Iteration indices `[first, last]` used by the fit.
    pub window: (usize, usize),
    pub points: usize,
    pub contractive: bool,
}

/// Least-squares fit of `log d_k = a + k·log Ĉ` over the last half of the
/// points, which must number at least [`MIN_TAIL_POINTS`].
pub fn fit_geometric(points: &[(usize, f64)]) -> Result<RateFit> {
    let usable: Vec<(usize, f64)> =
        points.iter().copied().filter(|&(_, d)| d.is_finite() && d >= DIST_FLOOR).collect();
    let tail = &usable[usable.len() / 2..];
    if tail.len() < MIN_TAIL_POINTS {
        return Err(Error::Diagnostic(format!(
            "rate fit needs {MIN_TAIL_POINTS} tail points above {DIST_FLOOR:e}, found {}",
            tail.len()
        )));
    }
    let n = tail.len() as f64;
    let (mk, my) = tail.iter().fold((0.0, 0.0), |(a, b), &(k, d)| (a + k as f64 / n, b + d.ln() / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(k, d) in tail {
        let (dx, dy) = (k as f64 - mk, d.ln() - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let ss_res: f64 = tail
        .iter()
        .map(|&(k, d)| {
            let r = d.ln() - (my + slope * (k as f64 - mk));
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let rate = slope.exp();
    Ok(RateFit {
        rate,
        r_squared,
        window: (tail[0].0, tail[tail.len() - 1].0),
        points: tail.len(),
        contractive: rate < 1.0 - 1e-12,
    })
}

fn dist_series(trace: &SolveTrace) -> Result<Vec<(usize, f64, f64)>> {
    let rows: Vec<(usize, f64, f64)> =
        trace.records.iter().filter_map(|r| r.dist_ref.map(|d| (r.k, d, r.natural_norm))).collect();
    if rows.is_empty() {
        return Err(Error::Diagnostic("trace has no dist_ref column values".into()));
    }
    Ok(rows)
}

/// Rate fit on the `dist_ref` column over iterations with `natural_norm < threshold`.
pub fn fit_linear_rate(trace: &SolveTrace, threshold: f64) -> Result<RateFit> {
    let pts: Vec<(usize, f64)> =
        dist_series(trace)?.into_iter().filter(|&(_, _, e)| e < threshold).map(|(k, d, _)| (k, d)).collect();
    fit_geometric(&pts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundProbe {
    /// `max dist(w^k, w*)/‖E_β‖` over the tail: a lower bound on any valid `τ`.
    pub tau_hat: f64,
    /// Smallest natural-map norm visited, the radius over which `τ̂` was observed.
    pub certified_radius: f64,
    pub samples: usize,
}

/// Ratio probe over the last half of the rows with nonzero natural map.
pub fn error_bound_probe(trace: &SolveTrace) -> Result<ErrorBoundProbe> {
    let rows: Vec<(f64, f64)> =
        dist_series(trace)?.into_iter().filter(|&(_, _, e)| e > 0.0 && e.is_finite()).map(|(_, d, e)| (d, e)).collect();
    let tail = &rows[rows.len() / 2..];
    if tail.is_empty() {
        return Err(Error::Diagnostic("no rows with a nonzero natural map".into()));
    }
    let tau_hat = tail.iter().map(|&(d, e)| d / e).fold(0.0, f64::max);
    let certified_radius = rows.iter().map(|&(_, e)| e).fold(f64::INFINITY, f64::min);
    Ok(ErrorBoundProbe { tau_hat, certified_radius, samples: tail.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FejerReport {
    pub constant: f64,
    pub checked: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    /// Largest `dist²_{k+1} − (dist²_k − C‖E_k‖²)` observed.
    pub max_excess: f64,
}

/// Checks `dist²_{k+1} ≤ dist²_k − C‖E_k‖² + 1e-8` on consecutive trace rows.
/// For convex instances (`c₀ = 0`) the constant is `(2 − β‖A‖)(1 − ρ/2)`;
/// otherwise `explicit_c` is required.
pub fn fejer_check(
    trace: &SolveTrace,
    beta: f64,
    rho: f64,
    norm_a: f64,
    c0: f64,
    explicit_c: Option<f64>,
) -> Result<FejerReport> {
    let constant = match explicit_c {
        Some(c) => c,
        None if c0 > 0.0 => return Err(Error::FejerNeedsConstant(c0)),
        None => (2.0 - beta * norm_a) * (1.0 - rho / 2.0),
    };
    let rows: Vec<(usize, f64, f64)> = dist_series(trace)?;
    let mut report = FejerReport { constant, checked: 0, violations: 0, violation_fraction: 0.0, max_excess: f64::NEG_INFINITY };
    for pair in rows.windows(2) {
        let ((k0, d0, e0), (k1, d1, _)) = (pair[0], pair[1]);
        if k1 != k0 + 1 {
            continue;
        }
        let excess = d1 * d1 - (d0 * d0 - constant * e0 * e0);
        report.checked += 1;
        report.max_excess = report.max_excess.max(excess);
        if excess > FEJER_SLACK {
            report.violations += 1;
        }
    }
    if report.checked == 0 {
        return Err(Error::Diagnostic("no consecutive iterations with distances".into()));
    }
    report.violation_fraction = report.violations as f64 / report.checked as f64;
    Ok(report)
}

/// Everything `diagnose` reports for one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub records: usize,
    pub final_natural_norm: Option<f64>,
    pub rate: Option<RateFit>,
    pub rate_error: Option<String>,
    pub error_bound: Option<ErrorBoundProbe>,
    pub error_bound_error: Option<String>,
    pub fejer: Option<FejerReport>,
    pub fejer_error: Option<String>,
}

/// Fejér parameters for [`diagnose_trace`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FejerParams {
    pub beta: f64,
    pub rho: f64,
    pub norm_a: f64,
    pub c0: f64,
    pub explicit_c: Option<f64>,
}

pub fn diagnose_trace(trace: &SolveTrace, fejer: Option<FejerParams>) -> DiagnosticReport {
    fn split<V>(r: Result<V>) -> (Option<V>, Option<String>) {
        match r {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        }
    }
    let (rate, rate_error) = split(fit_linear_rate(trace, f64::INFINITY));
    let (error_bound, error_bound_error) = split(error_bound_probe(trace));
    let (fejer, fejer_error) = match fejer {
        Some(p) => split(fejer_check(trace, p.beta, p.rho, p.norm_a, p.c0, p.explicit_c)),
        None => (None, None),
    };
    DiagnosticReport {
        records: trace.len(),
        final_natural_norm: trace.last().map(|r| r.natural_norm),
        rate,
        rate_error,
        error_bound,
        error_bound_error,
        fejer,
        fejer_error,
    }
}
