//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use ddrsm::linalg::BlockOperator;
use ddrsm::prox::DiagQuadratic;
use ddrsm::{Block, IterateState, LinearCoupling, ProblemF64};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute-force 1-D minimizer: step 1e-3 over `[lo, hi]`, then step 1e-6
/// around the best coarse point. Returns `(argmin, value)`.
pub fn grid_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let scan = |a: f64, b: f64, h: f64| {
        let n = ((b - a) / h).ceil() as usize;
        let mut best = (a, f(a));
        for i in 0..=n {
            let y = (a + i as f64 * h).min(b);
            let v = f(y);
            if v < best.1 {
                best = (y, v);
            }
        }
        best
    };
    let (mut y0, v0) = scan(lo, hi, 1e-3);
    // the regularizers have their kink at 0, which a coarse grid can step over
    if lo <= 0.0 && 0.0 <= hi && f(0.0) < v0 {
        y0 = 0.0;
    }
    scan(y0 - 2e-3, y0 + 2e-3, 1e-6)
}

/// Oracle for a scalar prox `argmin g(y) + (y − x)²/(2β)` on `[−|x|−3, |x|+3]`.
pub fn prox_oracle(g: impl Fn(f64) -> f64, x: f64, beta: f64) -> (f64, f64) {
    let r = x.abs() + 3.0;
    grid_argmin(|y| g(y) + (y - x) * (y - x) / (2.0 * beta), -r, r)
}

/// Reference smoothed power function, written out independently of the library.
pub fn smoothed_power(t: f64, q: f64, eps: f64) -> f64 {
    let a = t.abs();
    if a > eps {
        a.powf(q)
    } else {
        0.5 * q * eps.powf(q - 2.0) * t * t + (1.0 - q / 2.0) * eps.powf(q)
    }
}

/// Equality-constrained QP `Σ ½x_iᵀdiag(h_i)x_i + g_iᵀx_i  s.t.  Σ A_i x_i = b`
/// with its KKT solution computed by a dense LU solve.
pub struct Qp {
    pub problem: ProblemF64,
    pub a: Array2<f64>,
    pub x_star: Vec<Array1<f64>>,
    pub lambda_star: Array1<f64>,
    pub norm_a: f64,
}

impl Qp {
    pub fn kkt_state(&self) -> IterateState<f64> {
        let xi = self.problem.coupling.apply_transpose(self.lambda_star.view());
        IterateState { x: self.x_star.clone(), xi, lambda: self.lambda_star.clone(), k: 0 }
    }

    pub fn x_star_stacked(&self) -> Array1<f64> {
        Array1::from_iter(self.x_star.iter().flat_map(|b| b.iter().copied()))
    }
}

/// Random strongly convex QP with `dims.len()` blocks and `rows` constraints.
/// `h ∈ [h_lo, h_lo + 2]`; `A` has full row rank with probability one.
pub fn random_qp(seed: u64, dims: &[usize], rows: usize, h_lo: f64) -> Qp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = dims.iter().sum();
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    let h: Vec<f64> = (0..n).map(|_| u(h_lo, h_lo + 2.0)).collect();
    let g: Vec<f64> = (0..n).map(|_| u(-1.0, 1.0)).collect();
    let a = Array2::from_shape_fn((rows, n), |_| u(-1.0, 1.0));
    let b = Array1::from_shape_fn(rows, |_| u(-1.0, 1.0));

    let dim = n + rows;
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for i in 0..n {
        k[(i, i)] = h[i];
        rhs[i] = -g[i];
    }
    for r in 0..rows {
        for c in 0..n {
            k[(c, n + r)] = -a[[r, c]];
            k[(n + r, c)] = a[[r, c]];
        }
        rhs[n + r] = b[r];
    }
    let sol = k.lu().solve(&rhs).expect("KKT system is nonsingular");
    let norm_a = DMatrix::from_fn(rows, n, |i, j| a[[i, j]]).singular_values().max();

    let mut blocks = Vec::new();
    let mut ops = Vec::new();
    let mut x_star = Vec::new();
    let mut off = 0;
    for &d in dims {
        let f = DiagQuadratic {
            h: Array1::from(h[off..off + d].to_vec()),
            g: Array1::from(g[off..off + d].to_vec()),
        };
        blocks.push(Block::new(d, Arc::new(f)));
        ops.push(BlockOperator::Dense(a.slice(ndarray::s![.., off..off + d]).to_owned()));
        x_star.push(Array1::from_iter((off..off + d).map(|i| sol[i])));
        off += d;
    }
    let lambda_star = Array1::from_iter((0..rows).map(|r| sol[n + r]));
    let problem = ProblemF64::new(blocks, LinearCoupling::with_norm(ops, b, norm_a));
    Qp { problem, a, x_star, lambda_star, norm_a }
}
