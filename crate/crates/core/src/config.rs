//! TOML problem files.
//!
//! ```toml
//! [solver]            # every key optional
//! beta = 0.4
//! rho = 1.0
//! max_iter = 1000
//!
//! [[blocks]]
//! kind = "quadratic"  # ½xᵀdiag(h)x + gᵀx
//! h = [1.0]
//! g = [-1.0]
//! set = { kind = "box", lo = [0.0], hi = [2.0] }
//!
//! [coupling]
//! b = [0.5]
//! [[coupling.blocks]]
//! kind = "dense"
//! rows = [[1.0]]
//! ```
//!
//! Block kinds: `quadratic`, `smoothed_power`, `l1`, `fidelity`, `nuclear`,
//! `spectral_smoothed_power`. Coupling block kinds: `dense`, `identity`,
//! `file` (CSV of numbers, relative to the config file), `gaussian`.

use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{BlockOperator, DenseSvd};
use crate::problem::{default_tolerances, Block, BlockFunction, ConstraintSet, LinearCoupling, ProblemInstance, SolverParams};
use crate::prox::{DiagQuadratic, L1Norm, NuclearNorm, QuadraticFidelity, SmoothedPowerRegularizer, SpectralSmoothedPower};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub beta: Option<f64>,
    pub rho: Option<f64>,
    pub max_iter: Option<usize>,
    pub tol_e: Option<f64>,
    pub tol_p: Option<f64>,
    pub tol_d: Option<f64>,
    pub parallel: Option<bool>,
    pub stall_window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Free,
    Nonnegative,
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlockSpec {
    Quadratic { h: Vec<f64>, g: Vec<f64>, set: Option<SetSpec> },
    SmoothedPower { dim: usize, q: f64, eps: f64, weight: Option<f64>, set: Option<SetSpec> },
    L1 { dim: usize, weight: f64, set: Option<SetSpec> },
    Fidelity { target: Vec<f64>, delta: f64 },
    Nuclear { rows: usize, cols: usize, weight: f64 },
    SpectralSmoothedPower { rows: usize, cols: usize, q: f64, eps: f64, weight: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Dense { rows: Vec<Vec<f64>> },
    Identity { dim: usize, scale: Option<f64> },
    File { path: String },
    /// i.i.d. `N(0, scale²)` entries from a ChaCha8 stream seeded with `seed`, or the run seed.
    Gaussian { rows: usize, cols: usize, seed: Option<u64>, scale: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub b: Vec<f64>,
    /// Caller-supplied `‖A‖`; estimated by power iteration when absent.
    pub norm: Option<f64>,
    pub blocks: Vec<OperatorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default)]
    pub solver: SolverSection,
    pub blocks: Vec<BlockSpec>,
    pub coupling: CouplingSpec,
}

fn set_of(spec: &Option<SetSpec>) -> Result<ConstraintSet<f64>> {
    Ok(match spec {
        None | Some(SetSpec::Free) => ConstraintSet::Free,
        Some(SetSpec::Nonnegative) => ConstraintSet::NonNegative,
        Some(SetSpec::Box { lo, hi }) => ConstraintSet::new_box(lo.clone(), hi.clone())?,
    })
}

fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), i + 1))))
            .collect::<Result<_>>()?;
        if *cols.get_or_insert(row.len()) != row.len() {
            return Err(Error::Config(format!("{}:{}: ragged row", path.display(), i + 1)));
        }
        data.extend(row);
    }
    let cols = cols.unwrap_or(0);
    let rows = data.len().checked_div(cols).unwrap_or(0);
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Config(e.to_string()))
}

impl ProblemConfig {
    /// Parse errors carry the line and column of the offending TOML.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn operator(&self, spec: &OperatorSpec, base: &Path, seed: u64) -> Result<BlockOperator<f64>> {
        Ok(match spec {
            OperatorSpec::Dense { rows } => {
                let r = rows.len();
                let c = rows.first().map_or(0, |x| x.len());
                if rows.iter().any(|x| x.len() != c) {
                    return Err(Error::Config("dense coupling block has ragged rows".into()));
                }
                BlockOperator::Dense(Array2::from_shape_fn((r, c), |(i, j)| rows[i][j]))
            }
            OperatorSpec::Identity { dim, scale } => BlockOperator::identity(*dim, scale.unwrap_or(1.0)),
            OperatorSpec::File { path } => BlockOperator::Dense(read_matrix_csv(&base.join(path))?),
            OperatorSpec::Gaussian { rows, cols, seed: op_seed, scale } => {
                let mut rng = ChaCha8Rng::seed_from_u64(op_seed.unwrap_or(seed));
                let s = scale.unwrap_or(1.0);
                BlockOperator::Dense(Array2::from_shape_simple_fn((*rows, *cols), || {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    s * g
                }))
            }
        })
    }

    /// Builds the instance; relative `file` paths resolve against `base`, and
    /// `gaussian` blocks without their own seed use `seed`.
    pub fn problem(&self, base: &Path, seed: u64) -> Result<ProblemInstance<f64>> {
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, spec) in self.blocks.iter().enumerate() {
            let (dim, f, set): (usize, Arc<dyn BlockFunction<f64>>, _) = match spec {
                BlockSpec::Quadratic { h, g, set } => {
                    if h.len() != g.len() {
                        return Err(Error::Config(format!("block {i}: h and g lengths differ")));
                    }
                    let f = DiagQuadratic { h: Array1::from(h.clone()), g: Array1::from(g.clone()) };
                    (h.len(), Arc::new(f), set_of(set)?)
                }
                BlockSpec::SmoothedPower { dim, q, eps, weight, set } => {
                    let reg = SmoothedPowerRegularizer::new(*q, *eps, weight.unwrap_or(1.0))?;
                    (*dim, Arc::new(reg), set_of(set)?)
                }
                BlockSpec::L1 { dim, weight, set } => (*dim, Arc::new(L1Norm { weight: *weight }), set_of(set)?),
                BlockSpec::Fidelity { target, delta } => {
                    if !(*delta > 0.0) {
                        return Err(Error::Config(format!("block {i}: δ must be positive")));
                    }
                    let f = QuadraticFidelity { target: Array1::from(target.clone()), delta: *delta };
                    (target.len(), Arc::new(f), ConstraintSet::Free)
                }
                BlockSpec::Nuclear { rows, cols, weight } => {
                    (rows * cols, Arc::new(NuclearNorm::new(*rows, *cols, *weight, Arc::new(DenseSvd))), ConstraintSet::Free)
                }
                BlockSpec::SpectralSmoothedPower { rows, cols, q, eps, weight } => {
                    let reg = SmoothedPowerRegularizer::new(*q, *eps, weight.unwrap_or(1.0))?;
                    (rows * cols, Arc::new(SpectralSmoothedPower::new(*rows, *cols, reg, Arc::new(DenseSvd))), ConstraintSet::Free)
                }
            };
            blocks.push(Block::new(dim, f).with_set(set));
        }
        let ops = self.coupling.blocks.iter().map(|s| self.operator(s, base, seed)).collect::<Result<Vec<_>>>()?;
        let b = Array1::from(self.coupling.b.clone());
        for (i, op) in ops.iter().enumerate() {
            if op.rows() != b.len() {
                return Err(Error::Config(format!("coupling block {i} has {} rows, b has {}", op.rows(), b.len())));
            }
        }
        let coupling = match self.coupling.norm {
            Some(n) => LinearCoupling::with_norm(ops, b, n),
            None => LinearCoupling::new(ops, b)?,
        };
        Ok(ProblemInstance::new(blocks, coupling))
    }

    /// Defaults from [`SolverParams::defaults_for`] overridden by the `[solver]` section.
    pub fn params(&self, problem: &ProblemInstance<f64>, seed: u64) -> Result<SolverParams<f64>> {
        let s = &self.solver;
        let (tol_e, tol_p) = default_tolerances(problem);
        let mut p = match SolverParams::defaults_for(problem) {
            Ok(p) => p,
            Err(_) if s.beta.is_some() => SolverParams {
                beta: 0.0,
                rho: 1.0,
                max_iter: 1000,
                tol_e,
                tol_p,
                tol_d: tol_p,
                seed,
                parallel: false,
                stall_window: 200,
            },
            Err(e) => return Err(e),
        };
        p.seed = seed;
        if let Some(v) = s.beta {
            p.beta = v;
        }
        if let Some(v) = s.rho {
            p.rho = v;
        }
        if let Some(v) = s.max_iter {
            p.max_iter = v;
        }
        if let Some(v) = s.tol_e {
            p.tol_e = v;
        }
        if let Some(v) = s.tol_p {
            p.tol_p = v;
        }
        if let Some(v) = s.tol_d {
            p.tol_d = v;
        }
        if let Some(v) = s.parallel {
            p.parallel = v;
        }
        if let Some(v) = s.stall_window {
            p.stall_window = v;
        }
        Ok(p)
    }
}

/// Reads any TOML-deserializable config, e.g. a benchmark config.
pub fn load_toml<C: DeserializeOwned>(path: &Path) -> Result<C> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
