//! Low-rank plus sparse decomposition `min f(A) + g(E)  s.t.  A + E = D`.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pool;
use super::report::{BenchReport, BenchRow, SeriesPoint, TraceSeries};
use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, BlockOperator, DenseSvd, SvdOracle};
use crate::problem::{Block, BlockFunction, LinearCoupling, ProblemInstance, SolverParams};
use crate::prox::{L1Norm, NuclearNorm, SmoothedPowerRegularizer, SpectralSmoothedPower};
use crate::solver::{ddrsm_solve_with, default_init, SolveOptions, SolveResult};

#[derive(Debug, Clone, PartialEq)]
pub struct RpcaInstance {
    pub d: Array2<f64>,
    pub l: Array2<f64>,
    pub s: Array2<f64>,
    pub rank: usize,
    pub corruption: f64,
    pub magnitude: f64,
    /// Weight `λ_w` on the sparse term, `1/√max(rows, cols)` by default.
    pub weight: f64,
    pub seed: u64,
}

/// `L = PQᵀ/‖PQᵀ‖₂` with Gaussian factors, `S` with `⌈corruption·rows·cols⌉`
/// entries `±magnitude` at random positions, `D = L + S`.
///
/// Draw order: `P`, `Q` (row-major), positions, signs.
pub fn generate_rpca_instance(
    rows: usize,
    cols: usize,
    rank: usize,
    corruption: f64,
    magnitude: f64,
    seed: u64,
) -> Result<RpcaInstance> {
    if rows == 0 || cols == 0 || rank > rows.min(cols) {
        return Err(Error::InvalidParameter(format!("rank {rank} invalid for a {rows}×{cols} matrix")));
    }
    if !(0.0..1.0).contains(&corruption) || !(magnitude >= 0.0) {
        return Err(Error::InvalidParameter("corruption must lie in [0,1) and magnitude be ≥ 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |shape| Array2::from_shape_simple_fn(shape, || -> f64 { StandardNormal.sample(&mut rng) });
    let p = gauss((rows, rank));
    let q = gauss((cols, rank));
    let mut l = p.dot(&q.t());
    if rank > 0 {
        let top = DenseSvd.svd(l.view())?.sigma[0];
        if top > 0.0 {
            l.mapv_inplace(|v| v / top);
        }
    }
    let count = (corruption * (rows * cols) as f64).ceil() as usize;
    let mut s = Array2::<f64>::zeros((rows, cols));
    for idx in sample(&mut rng, rows * cols, count).into_vec() {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        s[[idx / cols, idx % cols]] = sign * magnitude;
    }
    Ok(RpcaInstance {
        d: &l + &s,
        l,
        s,
        rank,
        corruption,
        magnitude,
        weight: 1.0 / (rows.max(cols) as f64).sqrt(),
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum RpcaModel {
    /// `‖A‖_* + λ_w‖E‖₁`.
    Convex,
    /// `μ(Σ r(σ_i(A)) + λ_w Σ r(E_ij))` with the smoothed `ℓ_{1/2}` function.
    Nonconvex { mu: f64, eps: f64 },
}

impl RpcaModel {
    pub fn name(&self) -> &'static str {
        match self {
            RpcaModel::Convex => "ddrsm-convex",
            RpcaModel::Nonconvex { .. } => "ddrsm-nonconvex",
        }
    }
}

impl RpcaInstance {
    pub fn dims(&self) -> (usize, usize) {
        self.d.dim()
    }

    /// Blocks `vec(A)`, `vec(E)` (row-major), `[I, I]`, `b = vec(D)`.
    pub fn problem(&self, model: RpcaModel) -> Result<ProblemInstance<f64>> {
        let (rows, cols) = self.dims();
        let n = rows * cols;
        let svd: Arc<dyn SvdOracle<f64>> = Arc::new(DenseSvd);
        let (fa, fe): (Arc<dyn BlockFunction<f64>>, Arc<dyn BlockFunction<f64>>) = match model {
            RpcaModel::Convex => {
                (Arc::new(NuclearNorm::new(rows, cols, 1.0, svd)), Arc::new(L1Norm { weight: self.weight }))
            }
            RpcaModel::Nonconvex { mu, eps } => {
                let reg = SmoothedPowerRegularizer::new(0.5, eps, mu)?;
                (
                    Arc::new(SpectralSmoothedPower::new(rows, cols, reg, svd)),
                    Arc::new(reg.with_weight(mu * self.weight)),
                )
            }
        };
        let coupling = LinearCoupling::with_norm(
            vec![BlockOperator::identity(n, 1.0), BlockOperator::identity(n, 1.0)],
            Array1::from_iter(self.d.iter().copied()),
            2f64.sqrt(),
        );
        Ok(ProblemInstance::new(vec![Block::new(n, fa), Block::new(n, fe)], coupling))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpcaBenchConfig {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub corruption: f64,
    pub magnitude: f64,
    pub seeds: Vec<u64>,
    pub beta: f64,
    pub rho: f64,
    pub max_iter: usize,
    pub mu: f64,
    pub eps: f64,
    pub rank_threshold: f64,
    /// Overrides the default `λ_w`.
    pub weight: Option<f64>,
    pub jobs: usize,
    pub record_time: bool,
}

impl Default for RpcaBenchConfig {
    fn default() -> Self {
        RpcaBenchConfig {
            rows: 30,
            cols: 30,
            rank: 2,
            corruption: 0.05,
            magnitude: 1.0,
            seeds: (0..10).collect(),
            beta: 0.5,
            rho: 1.0,
            max_iter: 5000,
            mu: 0.1,
            eps: 1e-6,
            rank_threshold: 1e-6,
            weight: None,
            jobs: 1,
            record_time: false,
        }
    }
}

impl RpcaBenchConfig {
    pub fn models(&self) -> [RpcaModel; 2] {
        [RpcaModel::Convex, RpcaModel::Nonconvex { mu: self.mu, eps: self.eps }]
    }

    pub fn instance(&self, seed: u64) -> Result<RpcaInstance> {
        let mut inst = generate_rpca_instance(self.rows, self.cols, self.rank, self.corruption, self.magnitude, seed)?;
        if let Some(w) = self.weight {
            inst.weight = w;
        }
        Ok(inst)
    }

    fn label(&self) -> String {
        format!("{}x{}r{}@{}", self.rows, self.cols, self.rank, self.corruption)
    }
}

#[derive(Debug, Clone)]
pub struct RpcaOutcome {
    pub model: RpcaModel,
    pub result: SolveResult<f64>,
    pub low_rank: Array2<f64>,
    pub sparse: Array2<f64>,
    /// `‖A* − L‖_F/‖L‖_F`; `None` when `L = 0`.
    pub rel_err_low_rank: Option<f64>,
    /// `‖E* − S‖_F/‖S‖_F`; `None` when `S = 0`.
    pub rel_err_sparse: Option<f64>,
    pub singular_values: Array1<f64>,
    pub rank: usize,
}

fn rel_err(a: &Array2<f64>, truth: &Array2<f64>) -> Option<f64> {
    let t = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    (t > 0.0).then(|| (a - truth).iter().map(|v| v * v).sum::<f64>().sqrt() / t)
}

/// Solves one instance under one model from the default start.
pub fn run_rpca_model(instance: &RpcaInstance, model: RpcaModel, config: &RpcaBenchConfig) -> Result<RpcaOutcome> {
    let problem = instance.problem(model)?;
    let params = SolverParams::defaults_for(&problem)?
        .with_beta(config.beta)
        .with_rho(config.rho)
        .with_max_iter(config.max_iter);
    let opts = SolveOptions { record_time: config.record_time, ..SolveOptions::default() };
    let result = ddrsm_solve_with(&problem, &params, default_init(&problem)?, &opts)?;
    let dims = instance.dims();
    let to_mat = |v: &Array1<f64>| Array2::from_shape_vec(dims, v.to_vec()).map_err(|e| Error::dim(e.to_string()));
    let low_rank = to_mat(&result.state.x[0])?;
    let sparse = to_mat(&result.state.x[1])?;
    let svd = DenseSvd.svd(low_rank.view())?;
    Ok(RpcaOutcome {
        model,
        rel_err_low_rank: rel_err(&low_rank, &instance.l),
        rel_err_sparse: rel_err(&sparse, &instance.s),
        rank: numerical_rank(&svd, config.rank_threshold),
        singular_values: svd.sigma,
        low_rank,
        sparse,
        result,
    })
}

/// Convex and nonconvex outcomes for one seed, in that order.
pub fn run_rpca_seed(config: &RpcaBenchConfig, seed: u64) -> Result<Vec<RpcaOutcome>> {
    let instance = config.instance(seed)?;
    config.models().into_iter().map(|m| run_rpca_model(&instance, m, config)).collect()
}

pub fn run_rpca_benchmark(config: &RpcaBenchConfig) -> Result<BenchReport> {
    let label = config.label();
    let per_seed: Vec<(u64, Vec<Result<RpcaOutcome>>)> = pool(config.jobs)?.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| {
                let outcomes = match config.instance(seed) {
                    Ok(inst) => config.models().into_iter().map(|m| run_rpca_model(&inst, m, config)).collect(),
                    Err(e) => config.models().iter().map(|_| Err(Error::InvalidParameter(e.to_string()))).collect(),
                };
                (seed, outcomes)
            })
            .collect()
    });
    let mut report = BenchReport::new("rpca");
    for (seed, outcomes) in per_seed {
        for (model, out) in config.models().into_iter().zip(outcomes) {
            let row = BenchRow::new("rpca", label.clone(), config.rows, config.cols, config.corruption, seed, model.name());
            let o = match out {
                Ok(o) => o,
                Err(e) => {
                    report.rows.push(row.failed(e));
                    continue;
                }
            };
            let last = o.result.trace.last();
            let mut row = row;
            row.beta = Some(config.beta);
            row.rho = Some(config.rho);
            row.iterations = Some(o.result.iterations);
            row.status = o.result.status.as_str().into();
            row.objective = last.map(|t| t.objective);
            row.natural_norm = last.map(|t| t.natural_norm);
            row.time_ms = last.and_then(|t| t.time_ms);
            row.rel_err_low_rank = o.rel_err_low_rank;
            row.rel_err_sparse = o.rel_err_sparse;
            row.rank = Some(o.rank);
            report.rows.push(row);
            report.series.push(TraceSeries {
                cell: label.clone(),
                seed,
                solver: model.name().into(),
                metric: "objective".into(),
                points: o
                    .result
                    .trace
                    .records
                    .iter()
                    .map(|r| SeriesPoint { k: r.k, time_ms: r.time_ms, value: r.objective })
                    .collect(),
            });
        }
    }
    Ok(report)
}
