//! Block functions built on the proximal maps of this module.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};

use super::*;
use crate::error::{Error, Result};
use crate::linalg::{Svd, SvdOracle};
use crate::problem::BlockFunction;
use crate::scalar::Real;

impl<T: Real> BlockFunction<T> for SmoothedPowerRegularizer<T> {
    fn name(&self) -> &'static str {
        "smoothed_power"
    }

    fn value(&self, x: ArrayView1<T>) -> T {
        smoothed_power_value(x, self)
    }

    fn prox(&self, x: ArrayView1<T>, beta: T) -> Result<Array1<T>> {
        prox_smoothed_power(x, beta, self)
    }

    fn subgradient(&self, x: ArrayView1<T>) -> Option<Array1<T>> {
        Some(x.mapv(|t| self.weight * smoothed_power_derivative(t, self.q, self.eps)))
    }

    fn weak_convexity(&self) -> Option<T> {
        Some(weak_convexity_modulus_smoothed(self))
    }

    fn is_differentiable(&self) -> bool {
        true
    }

    fn is_separable(&self) -> bool {
        true
    }
}

impl<T: Real> BlockFunction<T> for QuadraticFidelity<T> {
    fn name(&self) -> &'static str {
        "quadratic_fidelity"
    }

    fn value(&self, x: ArrayView1<T>) -> T {
        let d = &x - &self.target;
        d.dot(&d) / (T::lit(2.0) * self.delta)
    }

    fn prox(&self, x: ArrayView1<T>, beta: T) -> Result<Array1<T>> {
        prox_quadratic_fidelity(x, beta, self)
    }

    fn subgradient(&self, x: ArrayView1<T>) -> Option<Array1<T>> {
        Some((&x - &self.target).mapv(|v| v / self.delta))
    }

    fn weak_convexity(&self) -> Option<T> {
        Some(T::zero())
    }

    fn is_differentiable(&self) -> bool {
        true
    }

    fn is_separable(&self) -> bool {
        true
    }
}

/// `w‖x‖₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Norm<T> {
    pub weight: T,
}

impl<T: Real> BlockFunction<T> for L1Norm<T> {
    fn name(&self) -> &'static str {
        "l1"
    }

    fn value(&self, x: ArrayView1<T>) -> T {
        self.weight * x.iter().map(|t| t.abs()).sum::<T>()
    }

    fn prox(&self, x: ArrayView1<T>, beta: T) -> Result<Array1<T>> {
        Ok(prox_l1(x, beta, self.weight))
    }

    fn subgradient(&self, x: ArrayView1<T>) -> Option<Array1<T>> {
        Some(x.mapv(|t| if t == T::zero() { T::zero() } else { self.weight * t.signum() }))
    }

    fn weak_convexity(&self) -> Option<T> {
        Some(T::zero())
    }

    fn is_separable(&self) -> bool {
        true
    }
}

/// `½ Σ h_i x_i² + Σ g_i x_i`; weakly convex with modulus `max(0, −min h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagQuadratic<T> {
    pub h: Array1<T>,
    pub g: Array1<T>,
}

impl<T: Real> BlockFunction<T> for DiagQuadratic<T> {
    fn name(&self) -> &'static str {
        "diag_quadratic"
    }

    fn value(&self, x: ArrayView1<T>) -> T {
        let half = T::lit(0.5);
        x.iter().zip(self.h.iter().zip(self.g.iter())).map(|(&x, (&h, &g))| half * h * x * x + g * x).sum()
    }

    fn prox(&self, x: ArrayView1<T>, beta: T) -> Result<Array1<T>> {
        if x.len() != self.h.len() {
            return Err(Error::dim("diag quadratic: argument length"));
        }
        let mut out = Array1::zeros(x.len());
        for (i, o) in out.iter_mut().enumerate() {
            let den = T::one() + beta * self.h[i];
            if !(den > T::zero()) {
                return Err(Error::Numeric(format!("prox subproblem unbounded below at coordinate {i}")));
            }
            *o = (x[i] - beta * self.g[i]) / den;
        }
        Ok(out)
    }

    fn subgradient(&self, x: ArrayView1<T>) -> Option<Array1<T>> {
        Some(&(&self.h * &x) + &self.g)
    }

    fn weak_convexity(&self) -> Option<T> {
        Some(self.h.iter().fold(T::zero(), |c, &h| c.max(-h)))
    }

    fn is_differentiable(&self) -> bool {
        true
    }

    fn is_separable(&self) -> bool {
        true
    }
}

fn as_matrix<T: Real>(x: ArrayView1<T>, rows: usize, cols: usize) -> Result<Array2<T>> {
    x.to_owned()
        .into_shape_with_order((rows, cols))
        .map_err(|_| Error::dim(format!("vector of length {} is not a {rows}×{cols} matrix", x.len())))
}

fn flatten<T: Real>(m: Array2<T>) -> Array1<T> {
    Array1::from_iter(m.iter().copied())
}

fn svd_of<T: Real>(svd: &dyn SvdOracle<T>, x: ArrayView1<T>, rows: usize, cols: usize) -> Option<Svd<T>> {
    as_matrix(x, rows, cols).ok().and_then(|m| svd.svd(m.view()).ok())
}

/// `w Σ r^q_ε(σ_i(X))` on a row-major flattened `rows × cols` block.
#[derive(Debug, Clone)]
pub struct SpectralSmoothedPower<T: Real> {
    pub rows: usize,
    pub cols: usize,
    pub reg: SmoothedPowerRegularizer<T>,
    pub svd: Arc<dyn SvdOracle<T>>,
}

impl<T: Real> SpectralSmoothedPower<T> {
    pub fn new(rows: usize, cols: usize, reg: SmoothedPowerRegularizer<T>, svd: Arc<dyn SvdOracle<T>>) -> Self {
        SpectralSmoothedPower { rows, cols, reg, svd }
    }
}

impl<T: Real> BlockFunction<T> for SpectralSmoothedPower<T> {
    fn name(&self) -> &'static str {
        "spectral_smoothed_power"
    }

    fn value(&self, x: ArrayView1<T>) -> T {
        match svd_of(self.svd.as_ref(), x, self.rows, self.cols) {
            Some(d) => smoothed_power_value(d.sigma.view(), &self.reg),
            None => T::nan(),
        }
    }

    fn prox(&self, x: ArrayView1<T>, beta: T) -> Result<Array1<T>> {
        let m = as_matrix(x, self.rows, self.cols)?;
        Ok(flatten(prox_spectral_half(m.view(), beta, &self.reg, self.svd.as_ref())?))
    }

    fn subgradient(&self, x: ArrayView1<T>) -> Option<Array1<T>> {
        let d = svd_of(self.svd.as_ref(), x, self.rows, self.cols)?;
        let g = d.sigma.mapv(|s| self.reg.weight * smoothed_power_derivative(s, self.reg.q, self.reg.eps));
        Some(flatten(d.recompose(&g)))
    }

    fn weak_convexity(&self) -> Option<T> {
        Some(weak_convexity_modulus_smoothed(&self.reg))
    }

    fn is_differentiable(&self) -> bool {
        true
    }
}

/// `w‖X‖_*` on a row-major flattened `rows × cols` block.
#[derive(Debug, Clone)]
pub struct NuclearNorm<T: Real> {
    pub rows: usize,
    pub cols: usize,
    pub weight: T,
    pub svd: Arc<dyn SvdOracle<T>>,
}

impl<T: Real> NuclearNorm<T> {
    pub fn new(rows: usize, cols: usize, weight: T, svd: Arc<dyn SvdOracle<T>>) -> Self {
        NuclearNorm { rows, cols, weight, svd }
    }
}

impl<T: Real> BlockFunction<T> for NuclearNorm<T> {
    fn name(&self) -> &'static str {
        "nuclear"
    }

    fn value(&self, x: ArrayView1<T>) -> T {
        match svd_of(self.svd.as_ref(), x, self.rows, self.cols) {
            Some(d) => self.weight * d.sigma.sum(),
            None => T::nan(),
        }
    }

    fn prox(&self, x: ArrayView1<T>, beta: T) -> Result<Array1<T>> {
        let m = as_matrix(x, self.rows, self.cols)?;
        Ok(flatten(prox_nuclear(m.view(), beta, self.weight, self.svd.as_ref())?))
    }

    /// `w U_r V_rᵀ` over the numerically nonzero singular values.
    fn subgradient(&self, x: ArrayView1<T>) -> Option<Array1<T>> {
        let d = svd_of(self.svd.as_ref(), x, self.rows, self.cols)?;
        let tol = d.sigma.first().copied().unwrap_or(T::zero()) * T::epsilon() * T::lit(self.rows.max(self.cols) as f64);
        let g = d.sigma.mapv(|s| if s > tol { self.weight } else { T::zero() });
        Some(flatten(d.recompose(&g)))
    }

    fn weak_convexity(&self) -> Option<T> {
        Some(T::zero())
    }
}
