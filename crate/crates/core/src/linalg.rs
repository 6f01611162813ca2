//! Dense and matrix-free linear operators, spectral-norm estimation and the
//! SVD oracle used by spectral proximal maps.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A linear map given only through its action and the action of its adjoint.
pub trait LinearMap<T: Real>: Send + Sync + fmt::Debug {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `y = A x`
    fn apply(&self, x: ArrayView1<T>) -> Array1<T>;
    /// `x = Aᵀ y`
    fn apply_transpose(&self, y: ArrayView1<T>) -> Array1<T>;
}

/// `s · I` on `R^n`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledIdentity<T> {
    pub dim: usize,
    pub scale: T,
}

impl<T: Real> LinearMap<T> for ScaledIdentity<T> {
    fn rows(&self) -> usize {
        self.dim
    }

    fn cols(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: ArrayView1<T>) -> Array1<T> {
        x.mapv(|v| v * self.scale)
    }

    fn apply_transpose(&self, y: ArrayView1<T>) -> Array1<T> {
        y.mapv(|v| v * self.scale)
    }
}

/// One block `A_i` of the coupling matrix.
#[derive(Debug, Clone)]
pub enum BlockOperator<T: Real> {
    Dense(Array2<T>),
    MatrixFree(Arc<dyn LinearMap<T>>),
}

impl<T: Real> BlockOperator<T> {
    pub fn identity(dim: usize, scale: T) -> Self {
        BlockOperator::MatrixFree(Arc::new(ScaledIdentity { dim, scale }))
    }

    pub fn rows(&self) -> usize {
        match self {
            BlockOperator::Dense(m) => m.nrows(),
            BlockOperator::MatrixFree(op) => op.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            BlockOperator::Dense(m) => m.ncols(),
            BlockOperator::MatrixFree(op) => op.cols(),
        }
    }

    pub fn apply(&self, x: ArrayView1<T>) -> Array1<T> {
        match self {
            BlockOperator::Dense(m) => m.dot(&x),
            BlockOperator::MatrixFree(op) => op.apply(x),
        }
    }

    pub fn apply_transpose(&self, y: ArrayView1<T>) -> Array1<T> {
        match self {
            BlockOperator::Dense(m) => transpose_dot(m.view(), y),
            BlockOperator::MatrixFree(op) => op.apply_transpose(y),
        }
    }

    /// Materialize the operator as a dense matrix (column by column for
    /// matrix-free operators).
    pub fn to_dense(&self) -> Array2<T> {
        match self {
            BlockOperator::Dense(m) => m.clone(),
            BlockOperator::MatrixFree(op) => {
                let mut out = Array2::zeros((op.rows(), op.cols()));
                let mut e = Array1::zeros(op.cols());
                for j in 0..op.cols() {
                    e[j] = T::one();
                    out.column_mut(j).assign(&op.apply(e.view()));
                    e[j] = T::zero();
                }
                out
            }
        }
    }
}

/// `Mᵀy`, accumulated row by row so a row-major `M` is read contiguously.
pub fn transpose_dot<T: Real>(m: ArrayView2<T>, y: ArrayView1<T>) -> Array1<T> {
    if !m.is_standard_layout() {
        return m.t().dot(&y);
    }
    let mut out = Array1::zeros(m.ncols());
    for (row, &yi) in m.rows().into_iter().zip(y.iter()) {
        if yi != T::zero() {
            Zip::from(&mut out).and(&row).for_each(|o, &r| *o += yi * r);
        }
    }
    out
}

pub fn norm<T: Real>(x: ArrayView1<T>) -> T {
    x.dot(&x).sqrt()
}

pub fn norm_sq<T: Real>(x: ArrayView1<T>) -> T {
    x.dot(&x)
}

/// Power iteration on `AᵀA` where `A = [A_1 … A_m]` acts on stacked vectors.
///
/// Returns `‖A v_k‖` for the normalized iterate `v_k`; the sequence is
/// nondecreasing in `iterations` and bounded by `σ_max(A)`.
pub fn spectral_norm_estimate<T: Real>(
    blocks: &[BlockOperator<T>],
    iterations: usize,
    seed: u64,
) -> Result<T> {
    if iterations == 0 {
        return Err(Error::InvalidParameter("power iteration count must be at least 1".into()));
    }
    let Some(rows) = blocks.first().map(|b| b.rows()) else {
        return Ok(T::zero());
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<Array1<T>> = blocks
        .iter()
        .map(|b| {
            Array1::from_shape_fn(b.cols(), |_| {
                let s: f64 = StandardNormal.sample(&mut rng);
                T::lit(s)
            })
        })
        .collect();
    if !normalize_stacked(&mut v) {
        return Ok(T::zero());
    }

    let apply = |v: &[Array1<T>]| -> Array1<T> {
        let mut out = Array1::zeros(rows);
        for (b, vi) in blocks.iter().zip(v) {
            out += &b.apply(vi.view());
        }
        out
    };

    for _ in 0..iterations {
        let av = apply(&v);
        let mut next: Vec<Array1<T>> = blocks.iter().map(|b| b.apply_transpose(av.view())).collect();
        if !normalize_stacked(&mut next) {
            return Ok(T::zero());
        }
        v = next;
    }
    Ok(norm(apply(&v).view()))
}

fn normalize_stacked<T: Real>(v: &mut [Array1<T>]) -> bool {
    let n = v.iter().map(|b| norm_sq(b.view())).sum::<T>().sqrt();
    if n == T::zero() || !n.is_finite() {
        return false;
    }
    for b in v.iter_mut() {
        b.mapv_inplace(|x| x / n);
    }
    true
}

/// Thin singular value decomposition `M = U diag(σ) Vᵀ`, `σ` nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Array2<T>,
    pub sigma: Array1<T>,
    pub vt: Array2<T>,
}

impl<T: Real> Svd<T> {
    /// `U diag(s) Vᵀ` for replacement singular values `s`.
    pub fn recompose(&self, s: &Array1<T>) -> Array2<T> {
        let mut us = self.u.clone();
        for (mut col, &sv) in us.columns_mut().into_iter().zip(s.iter()) {
            col.mapv_inplace(|x| x * sv);
        }
        us.dot(&self.vt)
    }
}

/// Injected SVD provider for spectral proximal maps.
pub trait SvdOracle<T: Real>: Send + Sync + fmt::Debug {
    fn svd(&self, m: ArrayView2<T>) -> Result<Svd<T>>;
}

/// Dense SVD backed by `nalgebra`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DenseSvd;

impl<T: Real + nalgebra::RealField> SvdOracle<T> for DenseSvd {
    fn svd(&self, m: ArrayView2<T>) -> Result<Svd<T>> {
        let (r, c) = m.dim();
        if m.iter().any(|v| !num_traits::Float::is_finite(*v)) {
            return Err(Error::Numeric("non-finite entry passed to SVD".into()));
        }
        let dm = nalgebra::DMatrix::<T>::from_fn(r, c, |i, j| m[[i, j]]);
        let svd = nalgebra::SVD::try_new(dm, true, true, T::lit(f64::EPSILON), 10_000)
            .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
        let u = svd.u.ok_or_else(|| Error::Numeric("SVD returned no U".into()))?;
        let vt = svd.v_t.ok_or_else(|| Error::Numeric("SVD returned no Vᵀ".into()))?;
        let k = svd.singular_values.len();
        Ok(Svd {
            u: Array2::from_shape_fn((r, k), |(i, j)| u[(i, j)]),
            sigma: Array1::from_shape_fn(k, |i| svd.singular_values[i]),
            vt: Array2::from_shape_fn((k, c), |(i, j)| vt[(i, j)]),
        })
    }
}

/// Number of singular values strictly above `threshold`.
pub fn numerical_rank<T: Real>(svd: &Svd<T>, threshold: T) -> usize {
    svd.sigma.iter().filter(|&&s| s > threshold).count()
}
