//! Instance generators and experiment harnesses.

mod cs;
mod report;
mod rpca;

pub use cs::{
    generate_cs_instance, generate_cs_instance_with, run_cs_benchmark, run_cs_cell, CsBenchConfig, CsCell, CsCellResult,
    CsInstance, CsModel, MeasurementKind, SolverChoice,
};
pub use report::{BenchReport, BenchRow, GridPoint, SeriesPoint, TraceSeries, SCHEMA_VERSION};
pub use rpca::{generate_rpca_instance, run_rpca_benchmark, run_rpca_model, run_rpca_seed, RpcaBenchConfig, RpcaInstance, RpcaModel, RpcaOutcome};

use ndarray::ArrayView1;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `10·log₁₀(peak²/MSE)` with `peak = max|x^G_i|`; `+∞` when the MSE is zero.
pub fn psnr<T: Real>(x_star: ArrayView1<T>, x_truth: ArrayView1<T>) -> Result<f64> {
    if x_star.len() != x_truth.len() || x_truth.is_empty() {
        return Err(Error::dim(format!("PSNR inputs have lengths {} and {}", x_star.len(), x_truth.len())));
    }
    let peak = x_truth.iter().fold(0.0f64, |p, v| p.max(v.to_f64_lossy().abs()));
    if peak == 0.0 {
        return Err(Error::InvalidParameter("PSNR undefined: ground truth is identically zero".into()));
    }
    let mse = x_star
        .iter()
        .zip(x_truth.iter())
        .map(|(a, b)| {
            let d = a.to_f64_lossy() - b.to_f64_lossy();
            d * d
        })
        .sum::<f64>()
        / x_truth.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Builds a rayon pool with `jobs` workers (`0` = rayon's default).
pub(crate) fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build worker pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn psnr_examples() {
        let truth = array![1.0, 0.0, 0.0, 0.0];
        let x = array![1.0, 0.002, 0.0, 0.0];
        assert!((psnr(x.view(), truth.view()).unwrap() - 60.0).abs() < 1e-9);
        assert_eq!(psnr(truth.view(), truth.view()).unwrap(), f64::INFINITY);
        assert!(psnr(truth.view(), array![0.0, 0.0, 0.0, 0.0].view()).is_err());
    }
}
