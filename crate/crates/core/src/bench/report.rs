use std::io;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::solver::fmt_f64;

pub const SCHEMA_VERSION: u32 = 1;

/// One cell × solver outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub benchmark: String,
    pub cell: String,
    pub rows: usize,
    pub cols: usize,
    /// Sparsity (CS) or corruption fraction (RPCA).
    pub fraction: f64,
    pub seed: u64,
    pub solver: String,
    pub beta: Option<f64>,
    pub rho: Option<f64>,
    pub iterations: Option<usize>,
    pub status: String,
    pub psnr: Option<f64>,
    pub objective: Option<f64>,
    pub natural_norm: Option<f64>,
    pub time_ms: Option<f64>,
    pub time_to_60db_ms: Option<f64>,
    pub rel_err_low_rank: Option<f64>,
    pub rel_err_sparse: Option<f64>,
    pub rank: Option<usize>,
    pub error: Option<String>,
}

impl BenchRow {
    pub fn new(benchmark: &str, cell: String, rows: usize, cols: usize, fraction: f64, seed: u64, solver: &str) -> Self {
        BenchRow {
            benchmark: benchmark.to_string(),
            cell,
            rows,
            cols,
            fraction,
            seed,
            solver: solver.to_string(),
            beta: None,
            rho: None,
            iterations: None,
            status: String::new(),
            psnr: None,
            objective: None,
            natural_norm: None,
            time_ms: None,
            time_to_60db_ms: None,
            rel_err_low_rank: None,
            rel_err_sparse: None,
            rank: None,
            error: None,
        }
    }

    pub fn failed(mut self, err: impl ToString) -> Self {
        self.status = "failed".into();
        self.error = Some(err.to_string());
        self
    }
}

/// One configuration evaluated during grid tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub cell: String,
    pub seed: u64,
    pub solver: String,
    pub beta: f64,
    pub rho: Option<f64>,
    pub iterations: usize,
    pub status: String,
    pub psnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub k: usize,
    pub time_ms: Option<f64>,
    /// PSNR for compressed sensing, objective for RPCA.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSeries {
    pub cell: String,
    pub seed: u64,
    pub solver: String,
    pub metric: String,
    pub points: Vec<SeriesPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub benchmark: String,
    pub rows: Vec<BenchRow>,
    pub grid: Vec<GridPoint>,
    pub series: Vec<TraceSeries>,
}

pub const BENCH_COLUMNS: [&str; 20] = [
    "benchmark",
    "cell",
    "rows",
    "cols",
    "fraction",
    "seed",
    "solver",
    "beta",
    "rho",
    "iterations",
    "status",
    "psnr",
    "objective",
    "E_norm",
    "time_ms",
    "time_to_60db_ms",
    "rel_err_low_rank",
    "rel_err_sparse",
    "rank",
    "error",
];

fn opt_f(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn opt_u(v: Option<usize>) -> String {
    v.map(|u| u.to_string()).unwrap_or_default()
}

impl BenchReport {
    pub fn new(benchmark: &str) -> Self {
        BenchReport { schema_version: SCHEMA_VERSION, benchmark: benchmark.into(), rows: Vec::new(), grid: Vec::new(), series: Vec::new() }
    }

    /// One row per cell × solver, preceded by a `#` schema comment line.
    pub fn write_csv<W: io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# ddrsm-bench schema v{} ({})", self.schema_version, self.benchmark)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(BENCH_COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.benchmark.clone(),
                r.cell.clone(),
                r.rows.to_string(),
                r.cols.to_string(),
                fmt_f64(r.fraction),
                r.seed.to_string(),
                r.solver.clone(),
                opt_f(r.beta),
                opt_f(r.rho),
                opt_u(r.iterations),
                r.status.clone(),
                opt_f(r.psnr),
                opt_f(r.objective),
                opt_f(r.natural_norm),
                opt_f(r.time_ms),
                opt_f(r.time_to_60db_ms),
                opt_f(r.rel_err_low_rank),
                opt_f(r.rel_err_sparse),
                opt_u(r.rank),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
