//! Compressed sensing with a smoothed `ℓ_{1/2}` regularizer:
//! `min w·Σ r(x_i) + ‖y − v‖²/(2δ)  s.t.  Mx − y = 0`.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{BenchReport, BenchRow, GridPoint, SeriesPoint, TraceSeries};
use super::{pool, psnr};
use crate::admm::{admm_solve_cs, AdmmParams};
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm_estimate, BlockOperator};
use crate::problem::{Block, LinearCoupling, ProblemInstance, SolverParams, DEFAULT_POWER_ITERATIONS, NORM_INFLATION};
use crate::prox::{QuadraticFidelity, SmoothedPowerRegularizer};
use crate::scalar::Real;
use crate::solver::{ddrsm_solve_with, default_init, Monitor, SolveOptions, SolveResult, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MeasurementKind {
    /// i.i.d. `N(0,1)` entries.
    Gaussian,
    /// Each entry is nonzero with probability `density`, then `N(0, 1/density)`.
    BernoulliSparse { density: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsInstance<T> {
    pub m: Array2<T>,
    pub v: Array1<T>,
    pub x_truth: Array1<T>,
    pub noise_var: T,
    pub delta: T,
    pub sparsity: T,
    pub seed: u64,
    pub measurement: MeasurementKind,
    /// Upper estimate of `‖M‖` (power iteration, inflated by 1%).
    pub m_norm: T,
}

/// Gaussian measurements; see [`generate_cs_instance_with`].
pub fn generate_cs_instance<T: Real>(
    m_rows: usize,
    n: usize,
    sparsity: f64,
    noise_var: f64,
    delta: f64,
    seed: u64,
) -> Result<CsInstance<T>> {
    generate_cs_instance_with(m_rows, n, sparsity, noise_var, delta, seed, MeasurementKind::Gaussian)
}

/// `⌈sparsity·n⌉` entries of `x^G` uniform in `[0,1]` at random positions,
/// `v_raw = M_raw x^G + N(0, noise_var)`, then `M = M_raw/√m`, `v = v_raw/√m`.
///
/// Draw order is positions, values, `M` (row-major), noise, all from one
/// ChaCha8 stream, and everything is generated in `f64` before conversion so
/// `f32` and `f64` instances share the same realization.
pub fn generate_cs_instance_with<T: Real>(
    m_rows: usize,
    n: usize,
    sparsity: f64,
    noise_var: f64,
    delta: f64,
    seed: u64,
    measurement: MeasurementKind,
) -> Result<CsInstance<T>> {
    if m_rows == 0 || n == 0 {
        return Err(Error::InvalidParameter("instance dimensions must be positive".into()));
    }
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::InvalidParameter(format!("sparsity {sparsity} must lie in [0,1)")));
    }
    if !(noise_var >= 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidParameter("noise variance must be ≥ 0 and δ_fid > 0".into()));
    }
    if let MeasurementKind::BernoulliSparse { density } = measurement {
        if !(density > 0.0 && density <= 1.0) {
            return Err(Error::InvalidParameter(format!("measurement density {density} must lie in (0,1]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = (sparsity * n as f64).ceil() as usize;
    let mut x = vec![0.0f64; n];
    let positions = sample(&mut rng, n, k).into_vec();
    for &p in &positions {
        x[p] = rng.random::<f64>();
    }
    let scale = 1.0 / (m_rows as f64).sqrt();
    let mut m = Array2::<f64>::zeros((m_rows, n));
    match measurement {
        MeasurementKind::Gaussian => m.iter_mut().for_each(|e| *e = StandardNormal.sample(&mut rng)),
        MeasurementKind::BernoulliSparse { density } => {
            let s = 1.0 / density.sqrt();
            m.iter_mut().for_each(|e| {
                let g: f64 = StandardNormal.sample(&mut rng);
                *e = if rng.random::<f64>() < density { g * s } else { 0.0 };
            })
        }
    }
    let x = Array1::from_vec(x);
    let sd = noise_var.sqrt();
    let mut v = m.dot(&x);
    v.iter_mut().for_each(|e| {
        let g: f64 = StandardNormal.sample(&mut rng);
        *e += sd * g;
    });
    m.mapv_inplace(|e| e * scale);
    v.mapv_inplace(|e| e * scale);

    let m: Array2<T> = m.mapv(T::lit);
    let m_norm = spectral_norm_estimate(&[BlockOperator::Dense(m.clone())], DEFAULT_POWER_ITERATIONS, 0)?
        * T::lit(NORM_INFLATION);
    Ok(CsInstance {
        m,
        v: v.mapv(T::lit),
        x_truth: x.mapv(T::lit),
        noise_var: T::lit(noise_var),
        delta: T::lit(delta),
        sparsity: T::lit(sparsity),
        seed,
        measurement,
        m_norm,
    })
}

impl<T: Real> CsInstance<T> {
    pub fn rows(&self) -> usize {
        self.m.nrows()
    }

    pub fn cols(&self) -> usize {
        self.m.ncols()
    }

    /// `‖[M, −I]‖ = √(1 + ‖M‖²)`.
    pub fn coupling_norm(&self) -> T {
        (T::one() + self.m_norm * self.m_norm).sqrt()
    }

    /// Blocks `x ∈ Rⁿ` (regularizer) and `y ∈ R^m` (fidelity), `A = [M, −I]`, `b = 0`.
    pub fn problem(&self, reg: &SmoothedPowerRegularizer<T>) -> Result<ProblemInstance<T>> {
        let (rows, cols) = self.m.dim();
        let fidelity = QuadraticFidelity { target: self.v.clone(), delta: self.delta };
        let coupling = LinearCoupling::with_norm(
            vec![BlockOperator::Dense(self.m.clone()), BlockOperator::identity(rows, -T::one())],
            Array1::zeros(rows),
            self.coupling_norm(),
        );
        Ok(ProblemInstance::new(
            vec![Block::new(cols, Arc::new(*reg)), Block::new(rows, Arc::new(fidelity))],
            coupling,
        ))
    }
}

/// Regularizer parameters `(q, ε, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsModel {
    pub q: f64,
    pub eps: f64,
    pub weight: f64,
}

impl CsModel {
    /// Model used for the Table-1 style comparison.
    pub const TABLE1: CsModel = CsModel { q: 0.5, eps: 1e-3, weight: 1e-3 };
    /// Unit-weight model with `ε = 0.01`, modulus `c₀ = 250`.
    pub const WEAKLY_CONVEX: CsModel = CsModel { q: 0.5, eps: 1e-2, weight: 1.0 };

    pub fn regularizer<T: Real>(&self) -> Result<SmoothedPowerRegularizer<T>> {
        SmoothedPowerRegularizer::new(T::lit(self.q), T::lit(self.eps), T::lit(self.weight))
    }
}

impl Default for CsModel {
    fn default() -> Self {
        CsModel::TABLE1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsCell {
    pub m_rows: usize,
    pub n: usize,
    pub sparsity: f64,
}

impl CsCell {
    pub fn label(&self) -> String {
        format!("{}x{}@{}", self.m_rows, self.n, self.sparsity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "solver")]
pub enum SolverChoice {
    Ddrsm { beta: f64, rho: f64 },
    Admm { beta: f64 },
}

impl SolverChoice {
    pub fn name(&self) -> &'static str {
        match self {
            SolverChoice::Ddrsm { .. } => "ddrsm",
            SolverChoice::Admm { .. } => "admm",
        }
    }

    fn beta(&self) -> f64 {
        match *self {
            SolverChoice::Ddrsm { beta, .. } | SolverChoice::Admm { beta } => beta,
        }
    }

    fn rho(&self) -> Option<f64> {
        match *self {
            SolverChoice::Ddrsm { rho, .. } => Some(rho),
            SolverChoice::Admm { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsBenchConfig {
    pub cells: Vec<CsCell>,
    pub seeds: Vec<u64>,
    pub noise_var: f64,
    pub delta: f64,
    pub model: CsModel,
    pub measurement: MeasurementKind,
    pub ddrsm_betas: Vec<f64>,
    pub ddrsm_rhos: Vec<f64>,
    pub admm_betas: Vec<f64>,
    pub max_iter: usize,
    /// Configurations within this many dB of the best final PSNR compete on iteration count.
    pub select_within_db: f64,
    pub psnr_target: f64,
    pub jobs: usize,
    pub record_time: bool,
}

impl Default for CsBenchConfig {
    fn default() -> Self {
        let cell = |m_rows, sparsity| CsCell { m_rows, n: 1000, sparsity };
        CsBenchConfig {
            cells: vec![cell(1500, 0.02), cell(3000, 0.02), cell(1500, 0.06), cell(1500, 0.12)],
            seeds: vec![1],
            noise_var: 0.01,
            delta: 1.0,
            model: CsModel::TABLE1,
            measurement: MeasurementKind::Gaussian,
            ddrsm_betas: vec![0.20, 0.25, 0.30, 0.35, 0.40, 0.45],
            ddrsm_rhos: vec![1.0, 1.2, 1.4, 1.6, 1.8],
            admm_betas: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0],
            max_iter: 1000,
            select_within_db: 0.1,
            psnr_target: 60.0,
            jobs: 1,
            record_time: false,
        }
    }
}

/// One solver run on one instance, with the PSNR of every recorded iterate.
#[derive(Debug, Clone)]
pub struct CsCellResult {
    pub choice: SolverChoice,
    pub result: SolveResult<f64>,
    pub psnr: f64,
    /// First recorded iterate at or above the PSNR target.
    pub iterations_to_target: Option<usize>,
    pub time_to_target_ms: Option<f64>,
}

impl CsCellResult {
    /// Copies the run's outcome into a report row.
    pub fn fill_row(&self, mut row: BenchRow) -> BenchRow {
        let last = self.result.trace.last();
        row.beta = Some(self.choice.beta());
        row.rho = self.choice.rho();
        row.iterations = Some(self.result.iterations);
        row.status = self.result.status.as_str().into();
        row.psnr = Some(self.psnr);
        row.objective = last.map(|t| t.objective);
        row.natural_norm = last.map(|t| t.natural_norm);
        row.time_ms = last.and_then(|t| t.time_ms);
        row.time_to_60db_ms = self.time_to_target_ms;
        row
    }

    pub fn psnr_series(&self) -> Vec<SeriesPoint> {
        self.result
            .trace
            .records
            .iter()
            .map(|r| SeriesPoint { k: r.k, time_ms: r.time_ms, value: r.monitor.unwrap_or(f64::NAN) })
            .collect()
    }
}

/// PSNR, with the `+∞` sentinel also for an exactly recovered zero signal.
fn psnr_or_nan(x: &Array1<f64>, truth: &Array1<f64>) -> f64 {
    match psnr(x.view(), truth.view()) {
        Ok(p) => p,
        Err(_) if x.iter().all(|v| *v == 0.0) => f64::INFINITY,
        Err(_) => f64::NAN,
    }
}

/// Runs one configuration from the default start (`x = 0`, `y = 0`, `λ = 0`).
/// `enforce_bounds` turns a step-size bound violation into an error.
pub fn run_cs_cell(
    instance: &CsInstance<f64>,
    model: &CsModel,
    choice: SolverChoice,
    max_iter: usize,
    psnr_target: f64,
    record_time: bool,
) -> Result<CsCellResult> {
    let reg = model.regularizer::<f64>()?;
    let problem = instance.problem(&reg)?;
    let truth = instance.x_truth.clone();
    let monitor: Monitor<f64> = Arc::new(move |s| psnr_or_nan(&s.x[0], &truth));
    let opts = SolveOptions { record_time, monitor: Some(monitor), ..SolveOptions::default() };
    let init = default_init(&problem)?;
    let result = match choice {
        SolverChoice::Ddrsm { beta, rho } => {
            let params = SolverParams::defaults_for(&problem)?.with_beta(beta).with_rho(rho).with_max_iter(max_iter);
            ddrsm_solve_with(&problem, &params, init, &opts)?
        }
        SolverChoice::Admm { beta } => {
            let mut params = AdmmParams::for_instance(instance, beta)?;
            params.max_iter = max_iter;
            admm_solve_cs(instance, &reg, &params, init, &opts)?
        }
    };
    let final_psnr = psnr_or_nan(&result.state.x[0], &instance.x_truth);
    let hit = result.trace.records.iter().find(|r| r.monitor.is_some_and(|p| p >= psnr_target));
    Ok(CsCellResult {
        choice,
        psnr: final_psnr,
        iterations_to_target: hit.map(|r| r.k),
        time_to_target_ms: hit.and_then(|r| r.time_ms),
        result,
    })
}

/// Among configurations within `within_db` of the best final PSNR, the one with
/// the fewest iterations; ties keep grid order.
fn select(runs: &[CsCellResult], within_db: f64) -> Option<usize> {
    let ok = |r: &CsCellResult| r.result.status != SolveStatus::Diverged && !r.psnr.is_nan();
    let best = runs.iter().filter(|r| ok(r)).map(|r| r.psnr).fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return None;
    }
    let mut pick: Option<usize> = None;
    for (i, r) in runs.iter().enumerate() {
        let close = r.psnr >= best - within_db || r.psnr == best;
        if ok(r) && close && pick.is_none_or(|p| r.result.iterations < runs[p].result.iterations) {
            pick = Some(i);
        }
    }
    pick
}

struct CellOutcome {
    rows: Vec<BenchRow>,
    grid: Vec<GridPoint>,
    series: Vec<TraceSeries>,
}

fn run_grid_cell(cell: &CsCell, seed: u64, config: &CsBenchConfig) -> CellOutcome {
    let label = cell.label();
    let base = |solver: &str| BenchRow::new("cs", label.clone(), cell.m_rows, cell.n, cell.sparsity, seed, solver);
    let mut out = CellOutcome { rows: Vec::new(), grid: Vec::new(), series: Vec::new() };
    let instance = match generate_cs_instance_with::<f64>(
        cell.m_rows,
        cell.n,
        cell.sparsity,
        config.noise_var,
        config.delta,
        seed,
        config.measurement,
    ) {
        Ok(i) => i,
        Err(e) => {
            out.rows.push(base("ddrsm").failed(&e));
            out.rows.push(base("admm").failed(&e));
            return out;
        }
    };
    let a_norm = instance.coupling_norm();
    let ddrsm: Vec<SolverChoice> = config
        .ddrsm_betas
        .iter()
        .filter(|&&b| b * a_norm < 1.0)
        .flat_map(|&beta| config.ddrsm_rhos.iter().map(move |&rho| SolverChoice::Ddrsm { beta, rho }))
        .collect();
    let admm: Vec<SolverChoice> = config.admm_betas.iter().map(|&beta| SolverChoice::Admm { beta }).collect();

    for (name, grid) in [("ddrsm", ddrsm), ("admm", admm)] {
        let mut runs = Vec::new();
        let mut last_err = None;
        for choice in grid {
            match run_cs_cell(&instance, &config.model, choice, config.max_iter, config.psnr_target, config.record_time) {
                Ok(r) => {
                    out.grid.push(GridPoint {
                        cell: label.clone(),
                        seed,
                        solver: name.into(),
                        beta: choice.beta(),
                        rho: choice.rho(),
                        iterations: r.result.iterations,
                        status: r.result.status.as_str().into(),
                        psnr: Some(r.psnr),
                    });
                    runs.push(r);
                }
                Err(e) => {
                    out.grid.push(GridPoint {
                        cell: label.clone(),
                        seed,
                        solver: name.into(),
                        beta: choice.beta(),
                        rho: choice.rho(),
                        iterations: 0,
                        status: "failed".into(),
                        psnr: None,
                    });
                    last_err = Some(e);
                }
            }
        }
        let Some(i) = select(&runs, config.select_within_db) else {
            let msg = last_err.map(|e| e.to_string()).unwrap_or_else(|| "no admissible configuration".into());
            out.rows.push(base(name).failed(msg));
            continue;
        };
        let r = &runs[i];
        out.rows.push(r.fill_row(base(name)));
        out.series.push(TraceSeries { cell: label.clone(), seed, solver: name.into(), metric: "psnr".into(), points: r.psnr_series() });
    }
    out
}

/// Tunes both solvers on every `(cell, seed)` over the configured grids and
/// reports the selected configuration per solver. Cells run on `jobs` workers;
/// results are assembled in configuration order.
pub fn run_cs_benchmark(config: &CsBenchConfig) -> Result<BenchReport> {
    let jobs: Vec<(CsCell, u64)> =
        config.cells.iter().flat_map(|c| config.seeds.iter().map(move |&s| (*c, s))).collect();
    let outcomes: Vec<CellOutcome> =
        pool(config.jobs)?.install(|| jobs.par_iter().map(|(c, s)| run_grid_cell(c, *s, config)).collect());
    let mut report = BenchReport::new("cs");
    for o in outcomes {
        report.rows.extend(o.rows);
        report.grid.extend(o.grid);
        report.series.extend(o.series);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparsity_count_and_noiseless() {
        let inst = generate_cs_instance::<f64>(40, 1000, 0.02, 0.0, 1.0, 3).unwrap();
        assert_eq!(inst.x_truth.iter().filter(|&&v| v != 0.0).count(), 20);
        assert!(inst.x_truth.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let r = &inst.v - &inst.m.dot(&inst.x_truth);
        assert!(r.iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn regeneration_is_identical() {
        let a = generate_cs_instance::<f64>(30, 20, 0.1, 0.01, 1.0, 9).unwrap();
        let b = generate_cs_instance::<f64>(30, 20, 0.1, 0.01, 1.0, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_cs_instance::<f64>(30, 20, 0.1, 0.01, 1.0, 10).unwrap();
        assert_ne!(a.m, c.m);
    }

    #[test]
    fn f32_shares_realization() {
        let a = generate_cs_instance::<f64>(12, 8, 0.25, 0.01, 1.0, 4).unwrap();
        let b = generate_cs_instance::<f32>(12, 8, 0.25, 0.01, 1.0, 4).unwrap();
        assert!(a.m.iter().zip(b.m.iter()).all(|(x, y)| (*x as f32 - y).abs() < 1e-6));
    }

    #[test]
    fn bernoulli_measurements_are_sparse() {
        let inst =
            generate_cs_instance_with::<f64>(200, 100, 0.05, 0.0, 1.0, 1, MeasurementKind::BernoulliSparse { density: 0.1 })
                .unwrap();
        let nz = inst.m.iter().filter(|&&v| v != 0.0).count() as f64 / 20000.0;
        assert!((nz - 0.1).abs() < 0.02);
    }

    #[test]
    fn rejects_bad_sparsity() {
        assert!(generate_cs_instance::<f64>(10, 10, 1.0, 0.0, 1.0, 0).is_err());
        assert!(generate_cs_instance::<f64>(10, 10, -0.1, 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn zero_signal_recovered() {
        let inst = generate_cs_instance::<f64>(30, 20, 0.0, 0.0, 1.0, 2).unwrap();
        for choice in [SolverChoice::Ddrsm { beta: 0.3, rho: 1.0 }, SolverChoice::Admm { beta: 0.5 }] {
            let r = run_cs_cell(&inst, &CsModel::TABLE1, choice, 50, 60.0, false).unwrap();
            assert!(r.result.state.x[0].iter().all(|v| *v == 0.0), "{choice:?}");
            assert!(r.result.iterations <= 2);
        }
    }
}
