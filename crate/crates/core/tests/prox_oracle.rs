mod common;

use common::{prox_oracle, smoothed_power};
use ddrsm::linalg::DenseSvd;
use ddrsm::prox::*;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn smoothed(x: f64, beta: f64, q: f64, eps: f64) -> f64 {
    prox_smoothed_power(array![x].view(), beta, &SmoothedPowerRegularizer::new(q, eps, 1.0).unwrap()).unwrap()[0]
}

#[test]
fn half_prox_at_two_matches_grid() {
    let (y, _) = prox_oracle(|y| y.abs().sqrt(), 2.0, 1.0);
    assert!((y - 1.605378).abs() < 1e-5);
    let got: f64 = prox_half_exact(array![2.0].view(), 1.0)[0];
    assert!((got - 1.605378).abs() < 1e-6, "{got}");
    assert!((smoothed(2.0, 1.0, 0.5, 0.01) - 1.605378).abs() < 1e-6);
}

#[test]
fn half_prox_dead_zone_and_zero() {
    let out = prox_half_exact(array![0.0, 0.5, -0.5].view(), 1.0);
    assert_eq!(out, array![0.0, 0.0, 0.0]);
    let (y, _) = prox_oracle(|y| y.abs().sqrt(), 0.5, 1.0);
    assert!(y.abs() < 1e-6);
}

#[test]
fn smoothed_quadratic_branch_example() {
    assert!((smoothed(0.5, 1.0, 0.5, 0.01) - 0.5 / 501.0).abs() < 1e-15);
    assert_eq!(smoothed(0.0, 1.0, 0.5, 0.01), 0.0);
}

#[test]
fn spectral_prox_of_diag() {
    let reg = SmoothedPowerRegularizer::half(0.01);
    let m = array![[4.0, 0.0], [0.0, 0.5]];
    let out = prox_spectral_half(m.view(), 1.0, &reg, &DenseSvd).unwrap();
    let (big, _) = prox_oracle(|y| smoothed_power(y, 0.5, 0.01), 4.0, 1.0);
    assert!((big - 3.7415).abs() < 1e-4);
    assert!((out[[0, 0]] - big).abs() < 1e-5);
    assert!((out[[1, 1]] - 0.5 / 501.0).abs() < 1e-12);
    assert!(out[[0, 1]].abs() < 1e-12 && out[[1, 0]].abs() < 1e-12);
    let zero = prox_spectral_half(Array2::<f64>::zeros((3, 2)).view(), 1.0, &reg, &DenseSvd).unwrap();
    assert!(zero.iter().all(|v| *v == 0.0));
}

#[test]
fn spectral_prox_keeps_rank_one() {
    let u = array![0.6, 0.8];
    let v = array![1.0, 0.0, 0.0];
    let m = Array2::from_shape_fn((2, 3), |(i, j)| 3.0 * u[i] * v[j]);
    let reg = SmoothedPowerRegularizer::half(0.01);
    let out = prox_spectral_half(m.view(), 0.5, &reg, &DenseSvd).unwrap();
    let s = sigma_of(&out);
    assert!((s[0] - smoothed(3.0, 0.5, 0.5, 0.01)).abs() < 1e-10);
    assert!(s[1] < 1e-12);
}

fn sigma_of(m: &Array2<f64>) -> Vec<f64> {
    use ddrsm::linalg::SvdOracle;
    DenseSvd.svd(m.view()).unwrap().sigma.to_vec()
}

#[test]
fn fidelity_examples_and_oracle() {
    let v = array![1.0, 1.0, 1.0];
    let fid = QuadraticFidelity { target: v.clone(), delta: 0.3 };
    assert_eq!(prox_quadratic_fidelity(v.view(), 0.3, &fid).unwrap(), v);
    let half = prox_quadratic_fidelity(array![0.0, 0.0, 0.0].view(), 0.3, &fid).unwrap();
    let half: Vec<f64> = half.to_vec();
    assert!(half.iter().all(|t| (t - 0.5).abs() < 1e-15));

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let fid = QuadraticFidelity { target: array![0.7], delta: 0.05 };
    for _ in 0..20 {
        let x: f64 = rng.random_range(-3.0..3.0);
        let got = prox_quadratic_fidelity(array![x].view(), 0.3, &fid).unwrap()[0];
        let (y, _) = prox_oracle(|y| (y - 0.7) * (y - 0.7) / 0.1, x, 0.3);
        assert!((got - y).abs() < 1e-4);
    }
}

#[test]
fn l1_examples() {
    assert_eq!(prox_l1(array![3.0, -3.0, 0.7].view(), 1.0, 1.0), array![2.0, -2.0, 0.0]);
}

#[test]
fn box_examples() {
    let x = array![0.5, -1.0];
    let inf = f64::INFINITY;
    assert_eq!(project_box(x.view(), array![-1.0, -2.0].view(), array![1.0, 2.0].view()).unwrap(), x);
    assert_eq!(project_box(array![-1.0].view(), array![0.0].view(), array![inf].view()).unwrap(), array![0.0]);
    assert_eq!(project_box(x.view(), array![-inf, -inf].view(), array![inf, inf].view()).unwrap(), x);
}

/// Most negative second difference of `r` over `[−3, 3]` at step 1e-4.
fn curvature_oracle(q: f64, eps: f64) -> f64 {
    let h = 1e-4;
    let mut worst = 0.0f64;
    let mut t = -3.0;
    while t <= 3.0 {
        let d2 = (smoothed_power(t + h, q, eps) - 2.0 * smoothed_power(t, q, eps) + smoothed_power(t - h, q, eps)) / (h * h);
        worst = worst.min(d2);
        t += h / 3.0;
    }
    -worst
}

#[test]
fn weak_convexity_matches_curvature_oracle() {
    for (eps, expect) in [(1.0, 0.25), (0.01, 250.0)] {
        let reg = SmoothedPowerRegularizer::<f64>::half(eps);
        let c = weak_convexity_modulus_smoothed(&reg);
        assert!((c - expect).abs() < 1e-9 * expect);
        let oracle = curvature_oracle(0.5, eps);
        assert!((oracle - c).abs() / c < 2e-2, "oracle {oracle} vs {c}");
    }
    let near_one = SmoothedPowerRegularizer::new(0.999999, 0.5, 1.0).unwrap();
    assert!(weak_convexity_modulus_smoothed(&near_one) < 1e-5);
}

#[test]
fn smoothed_value_at_zero_and_outside() {
    let reg = SmoothedPowerRegularizer::<f64>::half(0.01);
    assert!((smoothed_power_value(array![0.0].view(), &reg) - 0.075).abs() < 1e-15);
    assert!((smoothed_power_value(array![4.0].view(), &reg) - 2.0).abs() < 1e-15);
    assert!((smoothed_power(0.01, 0.5, 0.01) - 0.1).abs() < 1e-15);
}
