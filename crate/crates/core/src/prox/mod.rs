//! Closed-form proximal maps, regularizer values and projections.
//!
//! Every prox here solves `argmin_y g(y) + (y − x)²/(2β)`.

mod functions;

pub use functions::{DiagQuadratic, L1Norm, NuclearNorm, SpectralSmoothedPower};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SvdOracle;
use crate::scalar::Real;

/// `w · Σ r^q_ε(t_i)` with `r^q_ε(t) = |t|^q` for `|t| > ε` and the quadratic
/// patch `(q/2)ε^{q−2}t² + ((2−q)/2)ε^q` inside, which joins the outer branch
/// with matching value and slope at `|t| = ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedPowerRegularizer<T> {
    pub q: T,
    pub eps: T,
    pub weight: T,
}

impl<T: Real> SmoothedPowerRegularizer<T> {
    pub fn new(q: T, eps: T, weight: T) -> Result<Self> {
        if !(q > T::zero() && q < T::one()) {
            return Err(Error::InvalidParameter(format!("exponent q = {} must lie in (0,1)", q.to_f64_lossy())));
        }
        if !(eps > T::zero()) || !eps.is_finite() {
            return Err(Error::InvalidParameter("smoothing radius ε must be positive".into()));
        }
        if !(weight >= T::zero()) || !weight.is_finite() {
            return Err(Error::InvalidParameter("regularizer weight must be nonnegative".into()));
        }
        Ok(SmoothedPowerRegularizer { q, eps, weight })
    }

    /// Unit-weight `ℓ_{1/2}` smoothing with radius `eps`.
    pub fn half(eps: T) -> Self {
        SmoothedPowerRegularizer { q: T::lit(0.5), eps, weight: T::one() }
    }

    pub fn with_weight(mut self, weight: T) -> Self {
        self.weight = weight;
        self
    }

    fn is_half(&self) -> bool {
        self.q == T::lit(0.5)
    }
}

/// `‖y − v‖²/(2δ_fid)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFidelity<T> {
    pub target: Array1<T>,
    pub delta: T,
}

/// Unweighted scalar `r^q_ε(t)`.
pub fn smoothed_power_scalar<T: Real>(t: T, q: T, eps: T) -> T {
    let a = t.abs();
    if a > eps {
        a.powf(q)
    } else {
        let half = T::lit(0.5);
        half * q * eps.powf(q - T::lit(2.0)) * t * t + (T::lit(2.0) - q) * half * eps.powf(q)
    }
}

/// Derivative of the unweighted scalar `r^q_ε`.
pub fn smoothed_power_derivative<T: Real>(t: T, q: T, eps: T) -> T {
    let a = t.abs();
    if a > eps {
        t.signum() * q * a.powf(q - T::one())
    } else {
        q * eps.powf(q - T::lit(2.0)) * t
    }
}

pub fn smoothed_power_value<T: Real>(x: ArrayView1<T>, reg: &SmoothedPowerRegularizer<T>) -> T {
    reg.weight * x.iter().map(|&t| smoothed_power_scalar(t, reg.q, reg.eps)).sum::<T>()
}

/// `q(1−q)ε^{q−2}`, scaled by the regularizer weight.
pub fn weak_convexity_modulus_smoothed<T: Real>(reg: &SmoothedPowerRegularizer<T>) -> T {
    reg.weight * reg.q * (T::one() - reg.q) * reg.eps.powf(reg.q - T::lit(2.0))
}

/// Nonzero stationary branch of `(y − x)² + λ|y|^{1/2}`; needs
/// `|x| ≥ (3/4)λ^{2/3}` so the arccos argument stays in `[−1, 1]`.
fn half_branch<T: Real>(x: T, lambda: T) -> T {
    let c = lambda / T::lit(8.0) * (x.abs() / T::lit(3.0)).powf(T::lit(-1.5));
    debug_assert!(c <= T::one() + T::lit(1e-12), "arccos argument {c:?} out of range");
    let phi = c.min(T::one()).acos();
    let two_thirds = T::lit(2.0 / 3.0);
    two_thirds * x * (T::one() + (T::lit(2.0 * std::f64::consts::FRAC_PI_3) - two_thirds * phi).cos())
}

/// Scalar prox of `|·|^{1/2}` at scale `β`.
///
/// In the form `(y − x)² + λ|y|^{1/2}` the scale is `λ = 2β`.
pub fn prox_half_scalar<T: Real>(x: T, beta: T) -> T {
    let lambda = T::lit(2.0) * beta;
    let threshold = T::lit(54f64.cbrt() / 4.0) * lambda.powf(T::lit(2.0 / 3.0));
    if x.abs() <= threshold {
        T::zero()
    } else {
        half_branch(x, lambda)
    }
}

pub fn prox_half_exact<T: Real>(x: ArrayView1<T>, beta: T) -> Array1<T> {
    x.mapv(|t| prox_half_scalar(t, beta))
}

/// Scalar prox of the unweighted `r^q_ε` at scale `β`.
pub fn prox_smoothed_scalar<T: Real>(x: T, beta: T, q: T, eps: T) -> Result<T> {
    let a = x.abs();
    let m = x.signum() * (a / (T::one() + beta * q * eps.powf(q - T::lit(2.0)))).min(eps);
    if x == T::zero() {
        return Ok(T::zero());
    }
    let lambda = T::lit(2.0) * beta;
    if a <= T::lit(0.75) * lambda.powf(T::lit(2.0 / 3.0)) {
        return Ok(m);
    }
    if q != T::lit(0.5) {
        return Err(Error::UnsupportedExponent(q.to_f64_lossy()));
    }
    let fd = half_branch(x, lambda);
    let r = |y: T| (y - x) * (y - x) / (T::lit(2.0) * beta) + smoothed_power_scalar(y, q, eps);
    Ok(if r(fd) < r(m) { fd } else { m })
}

pub fn prox_smoothed_power<T: Real>(
    x: ArrayView1<T>,
    beta: T,
    reg: &SmoothedPowerRegularizer<T>,
) -> Result<Array1<T>> {
    if reg.weight == T::zero() {
        return Ok(x.to_owned());
    }
    if !reg.is_half() {
        // The quadratic region is closed-form for every q; reject only outside it.
        let split = T::lit(0.75) * (T::lit(2.0) * beta * reg.weight).powf(T::lit(2.0 / 3.0));
        if x.iter().any(|t| t.abs() > split) {
            return Err(Error::UnsupportedExponent(reg.q.to_f64_lossy()));
        }
    }
    let b = beta * reg.weight;
    let mut out = Array1::zeros(x.len());
    for (o, &t) in out.iter_mut().zip(x.iter()) {
        *o = prox_smoothed_scalar(t, b, reg.q, reg.eps)?;
    }
    Ok(out)
}

pub fn prox_quadratic_fidelity<T: Real>(arg: ArrayView1<T>, beta: T, fid: &QuadraticFidelity<T>) -> Result<Array1<T>> {
    if arg.len() != fid.target.len() {
        return Err(Error::dim(format!("argument length {} vs target length {}", arg.len(), fid.target.len())));
    }
    let d = fid.delta;
    Ok(Array1::from_iter(arg.iter().zip(fid.target.iter()).map(|(&a, &v)| (d * a + beta * v) / (d + beta))))
}

pub fn soft_threshold<T: Real>(t: T, thr: T) -> T {
    t.signum() * (t.abs() - thr).max(T::zero())
}

pub fn prox_l1<T: Real>(x: ArrayView1<T>, beta: T, weight: T) -> Array1<T> {
    let thr = beta * weight;
    x.mapv(|t| if t.abs() <= thr { T::zero() } else { soft_threshold(t, thr) })
}

pub fn project_box<T: Real>(x: ArrayView1<T>, lo: ArrayView1<T>, hi: ArrayView1<T>) -> Result<Array1<T>> {
    if lo.len() != x.len() || hi.len() != x.len() {
        return Err(Error::dim("box bounds must match the point dimension"));
    }
    if let Some(i) = lo.iter().zip(hi.iter()).position(|(l, h)| l > h) {
        return Err(Error::InvalidSet(i));
    }
    Ok(Array1::from_iter(
        x.iter().zip(lo.iter().zip(hi.iter())).map(|(&v, (&l, &h))| v.max(l).min(h)),
    ))
}

/// `U diag(prox(σ)) Vᵀ` with the smoothed scalar prox applied to the singular values.
pub fn prox_spectral_half<T: Real>(
    m: ArrayView2<T>,
    beta: T,
    reg: &SmoothedPowerRegularizer<T>,
    svd: &dyn SvdOracle<T>,
) -> Result<Array2<T>> {
    let d = svd.svd(m)?;
    let s = prox_smoothed_power(d.sigma.view(), beta, reg)?;
    Ok(d.recompose(&s))
}

/// Singular-value soft thresholding, the prox of `w‖·‖_*`.
pub fn prox_nuclear<T: Real>(m: ArrayView2<T>, beta: T, weight: T, svd: &dyn SvdOracle<T>) -> Result<Array2<T>> {
    let d = svd.svd(m)?;
    let s = prox_l1(d.sigma.view(), beta, weight);
    Ok(d.recompose(&s))
}
