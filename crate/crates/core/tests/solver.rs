mod common;

use std::sync::Arc;

use common::random_qp;
use ddrsm::admm::{admm_solve_cs, AdmmParams};
use ddrsm::bench::{generate_cs_instance, CsModel};
use ddrsm::diagnostics::*;
use ddrsm::linalg::BlockOperator;
use ddrsm::problem::{beta_upper_bound, validate_problem};
use ddrsm::prox::{DiagQuadratic, QuadraticFidelity, SmoothedPowerRegularizer};
use ddrsm::*;
use ndarray::{array, Array1, Array2};

fn tight(problem: &ProblemF64, beta: f64) -> ParamsF64 {
    let mut p = SolverParams::defaults_for(problem).unwrap().with_beta(beta).with_max_iter(20_000);
    p.tol_e = 1e-11;
    p.tol_p = 1e-300;
    p.tol_d = 1e-300;
    p
}

#[test]
fn qp_solution_matches_kkt_oracle() {
    for seed in 0..5 {
        let qp = random_qp(seed, &[3, 4], 3, 0.5);
        let beta = 0.9 / qp.norm_a;
        let res = ddrsm_solve(&qp.problem, &tight(&qp.problem, beta), default_init(&qp.problem).unwrap()).unwrap();
        assert_eq!(res.status, SolveStatus::Converged);
        let err = (&res.state.x_stacked() - &qp.x_star_stacked()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn kkt_certification() {
    let qp = random_qp(7, &[2, 2, 3], 4, 0.5);
    let beta = 0.5 / qp.norm_a;
    assert!(kkt_certify(&qp.kkt_state(), &qp.problem, beta).unwrap() <= 1e-10);
    let mut off = qp.kkt_state();
    off.x[0][0] += 0.1;
    assert!(kkt_certify(&off, &qp.problem, beta).unwrap() > 0.0);
    let r = ReferenceSolution::from_primal_dual(&qp.problem, qp.x_star.clone(), qp.lambda_star.clone(), beta, Provenance::OracleSolved)
        .unwrap();
    assert!(r.kkt_norm <= 1e-10);
    assert!(ReferenceSolution::certify(off, &qp.problem, beta, Provenance::Analytic).is_err());
}

#[test]
fn start_at_kkt_point_does_no_work() {
    let qp = random_qp(3, &[3, 2], 2, 1.0);
    let res = ddrsm_solve(&qp.problem, &tight(&qp.problem, 0.5 / qp.norm_a), qp.kkt_state()).unwrap();
    assert_eq!(res.status, SolveStatus::Converged);
    assert_eq!(res.iterations, 0);
    assert_eq!(res.state, qp.kkt_state());
}

#[test]
fn subgradients_track_gradients() {
    let qp = random_qp(5, &[3, 3], 2, 0.5);
    let mut params = tight(&qp.problem, 0.8 / qp.norm_a);
    params.max_iter = 30;
    let mut state = default_init(&qp.problem).unwrap();
    for _ in 0..30 {
        let (next, _, _) = ddrsm::solver::ddrsm_iterate(&state, &qp.problem, &params).unwrap();
        state = next;
        for (i, blk) in qp.problem.blocks.iter().enumerate() {
            let g = blk.function.subgradient(state.x[i].view()).unwrap();
            assert!((&g - &state.xi[i]).iter().all(|d| d.abs() < 1e-8));
        }
    }
}

#[test]
fn parallel_matches_serial_bitwise() {
    let qp = random_qp(9, &[5, 4, 6, 3], 6, 0.5);
    let mut p = tight(&qp.problem, 0.7 / qp.norm_a);
    p.max_iter = 200;
    let serial = ddrsm_solve(&qp.problem, &p, default_init(&qp.problem).unwrap()).unwrap();
    p.parallel = true;
    let parallel = ddrsm_solve(&qp.problem, &p, default_init(&qp.problem).unwrap()).unwrap();
    assert_eq!(serial.state, parallel.state);
    assert_eq!(serial.trace.to_csv_string().unwrap(), parallel.trace.to_csv_string().unwrap());
}

#[test]
fn f32_solve_converges() {
    let h = array![1.0f32, 2.0];
    let f = DiagQuadratic { h, g: array![-1.0f32, 0.5] };
    let coupling = LinearCoupling::with_norm(vec![BlockOperator::Dense(array![[1.0f32, 1.0]])], array![1.0f32], 2f32.sqrt());
    let problem = ProblemF32::new(vec![Block::new(2, Arc::new(f))], coupling);
    let mut params = SolverParams::defaults_for(&problem).unwrap().with_beta(0.5);
    params.tol_e = 1e-5;
    let res = ddrsm_solve(&problem, &params, default_init(&problem).unwrap()).unwrap();
    assert_eq!(res.status, SolveStatus::Converged);
    // x1 + x2 = 1, x1 − 1 = λ, 2x2 + 0.5 = λ  →  x = (7/6, −1/6)
    assert!((res.state.x[0][0] - 7.0 / 6.0).abs() < 1e-4);
    assert!((res.state.x[0][1] + 1.0 / 6.0).abs() < 1e-4);
}

#[test]
fn default_init_examples() {
    let reg = SmoothedPowerRegularizer::half(0.01);
    let fid = QuadraticFidelity { target: Array1::ones(3), delta: 1.0 };
    let coupling = LinearCoupling::with_norm(
        vec![BlockOperator::Dense(Array2::zeros((3, 2))), BlockOperator::identity(3, -1.0)],
        Array1::zeros(3),
        1.0,
    );
    let problem = ProblemF64::new(vec![Block::new(2, Arc::new(reg)), Block::new(3, Arc::new(fid))], coupling);
    let s = default_init(&problem).unwrap();
    assert_eq!(s.xi[0], Array1::<f64>::zeros(2));
    assert_eq!(s.xi[1], -Array1::<f64>::ones(3));

    let f = DiagQuadratic { h: array![1.0, 1.0], g: array![0.3, -0.2] };
    let boxed = Block::new(2, Arc::new(f))
        .with_set(ConstraintSet::new_box(vec![1.0, -1.0], vec![2.0, 1.0]).unwrap());
    let coupling = LinearCoupling::with_norm(vec![BlockOperator::Dense(array![[1.0, 0.0]])], array![1.0], 1.0);
    let problem = ProblemF64::new(vec![boxed], coupling);
    let s = default_init(&problem).unwrap();
    assert_eq!(s.x[0], array![1.0, 0.0]);
    assert_eq!(s.xi[0], array![1.3, -0.2]);
}

#[test]
fn validation_examples() {
    let inst = generate_cs_instance::<f64>(30, 20, 0.1, 0.01, 1.0, 1).unwrap();
    let problem = inst.problem(&CsModel::TABLE1.regularizer().unwrap()).unwrap();
    let norm_a = problem.coupling.norm_estimate;
    let ok = SolverParams::defaults_for(&problem).unwrap().with_beta(0.9 / norm_a);
    assert!(validate_problem(&problem, &ok).is_valid());
    let big = ok.with_beta(2.0 / norm_a);
    let rep = validate_problem(&problem, &big);
    assert!(rep.violations.iter().any(|v| v.contains("0 < β < 1/‖A‖")));
    let rho = ok.with_rho(2.0);
    assert!(validate_problem(&problem, &rho).violations.iter().any(|v| v.contains("ρ must lie in (0,2)")));
}

#[test]
fn admissible_range_examples() {
    assert_eq!(beta_upper_bound(0.0, 2.0, 3.0).unwrap(), 0.5);
    assert_eq!(beta_upper_bound(1.0, 1.0, 1.0).unwrap(), 0.5);
    assert_eq!(beta_upper_bound(4.0, 0.0, 1.0).unwrap(), 0.125);
}

#[test]
fn admm_agrees_with_ddrsm_on_tiny_instance() {
    let inst = generate_cs_instance::<f64>(20, 10, 0.2, 0.01, 1.0, 4).unwrap();
    let model = CsModel { q: 0.5, eps: 1.0, weight: 0.05 };
    let reg = model.regularizer().unwrap();
    let problem = inst.problem(&reg).unwrap();
    let mut p = tight(&problem, 0.9 / problem.coupling.norm_estimate);
    p.tol_e = 1e-10;
    let dd = ddrsm_solve(&problem, &p, default_init(&problem).unwrap()).unwrap();
    assert_eq!(dd.status, SolveStatus::Converged);

    let mut ap = AdmmParams::for_instance(&inst, 1.0).unwrap();
    ap.max_iter = 50_000;
    ap.tol_p = 1e-13;
    ap.tol_d = 1e-13;
    let ad = admm_solve_cs(&inst, &reg, &ap, default_init(&problem).unwrap(), &SolveOptions::default()).unwrap();
    let (o1, o2) = (problem.objective(&dd.state.x), problem.objective(&ad.state.x));
    assert!((o1 - o2).abs() < 1e-4, "{o1} vs {o2}");
    assert!((o1 - o2).abs() / (1.0 + o1.abs()) <= 1e-3);

    // primal feasibility over the tail of the converged run
    let tail = &ad.trace.records[ad.trace.len() / 2..];
    for w in tail.windows(2) {
        assert!(w[1].infeasibility <= w[0].infeasibility + 1e-8);
    }
}

#[test]
fn admm_zero_signal() {
    let inst = generate_cs_instance::<f64>(15, 10, 0.0, 0.0, 1.0, 2).unwrap();
    let reg = CsModel::TABLE1.regularizer().unwrap();
    let problem = inst.problem(&reg).unwrap();
    let ap = AdmmParams::for_instance(&inst, 0.5).unwrap();
    let r = admm_solve_cs(&inst, &reg, &ap, default_init(&problem).unwrap(), &SolveOptions::default()).unwrap();
    assert!(r.iterations <= 2);
    assert!(r.state.x[0].iter().all(|v| *v == 0.0));
    assert!(r.trace.records.iter().all(|t| t.alpha.is_none()));
}

#[test]
fn admm_rejects_long_step() {
    let inst = generate_cs_instance::<f64>(15, 10, 0.1, 0.0, 1.0, 2).unwrap();
    let reg = CsModel::TABLE1.regularizer().unwrap();
    let problem = inst.problem(&reg).unwrap();
    let mut ap = AdmmParams::for_instance(&inst, 0.5).unwrap();
    ap.eta *= 2.0;
    assert!(admm_solve_cs(&inst, &reg, &ap, default_init(&problem).unwrap(), &SolveOptions::default()).is_err());
}

#[test]
fn convex_qp_diagnostics() {
    let mut taus = Vec::new();
    for seed in 0..10 {
        let qp = random_qp(100 + seed, &[4, 3, 5], 5, 0.5);
        let beta = 0.5 / qp.norm_a;
        let r = ReferenceSolution::certify(qp.kkt_state(), &qp.problem, beta, Provenance::OracleSolved).unwrap();
        let opts = SolveOptions { reference: Some(r.w.clone()), ..Default::default() };
        let res = ddrsm_solve_with(&qp.problem, &tight(&qp.problem, beta), default_init(&qp.problem).unwrap(), &opts).unwrap();
        let f = fejer_check(&res.trace, beta, 1.0, qp.norm_a, 0.0, None).unwrap();
        assert_eq!(f.constant, 0.75);
        assert_eq!(f.violations, 0, "seed {seed}");
        let fit = fit_linear_rate(&res.trace, f64::INFINITY).unwrap();
        assert!(fit.rate < 1.0 && fit.r_squared >= 0.9, "{fit:?}");
        taus.push(error_bound_probe(&res.trace).unwrap().tau_hat);
    }
    let (lo, hi) = taus.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
    assert!(hi.is_finite() && lo > 0.0);
    println!("tau range {lo} .. {hi}");
}

#[test]
fn error_bound_probe_rescaled_problem() {
    let qp = random_qp(42, &[3, 3], 2, 1.0);
    let beta = 0.5 / qp.norm_a;
    let run = |problem: &ProblemF64, lambda: &Array1<f64>, beta: f64| {
        let xi = problem.coupling.apply_transpose(lambda.view());
        let st = IterateState { x: qp.x_star.clone(), xi, lambda: lambda.clone(), k: 0 };
        let r = ReferenceSolution::certify(st, problem, beta, Provenance::OracleSolved).unwrap();
        let opts = SolveOptions { reference: Some(r.w), ..Default::default() };
        let res = ddrsm_solve_with(problem, &tight(problem, beta), default_init(problem).unwrap(), &opts).unwrap();
        error_bound_probe(&res.trace).unwrap().tau_hat
    };
    let base = run(&qp.problem, &qp.lambda_star, beta);
    // A, b scaled by 10: same x*, λ* scaled by 1/10, β scaled by 1/10 keeps β‖A‖.
    let ops = qp.problem.coupling.blocks.iter().map(|b| BlockOperator::Dense(b.to_dense() * 10.0)).collect();
    let scaled_coupling = LinearCoupling::with_norm(ops, &qp.problem.coupling.b * 10.0, qp.norm_a * 10.0);
    let scaled = ProblemF64::new(qp.problem.blocks.clone(), scaled_coupling);
    let tau = run(&scaled, &(&qp.lambda_star / 10.0), beta / 10.0);
    assert!(tau.is_finite() && tau > 0.0);
    assert!((tau - base).abs() > 1e-6 * base, "probe must be re-run, got identical {tau}");
}

#[test]
fn error_bound_probe_stable_across_starts() {
    use rand::{Rng, SeedableRng};
    let qp = random_qp(11, &[4, 3], 3, 0.5);
    let beta = 0.5 / qp.norm_a;
    let r = ReferenceSolution::certify(qp.kkt_state(), &qp.problem, beta, Provenance::OracleSolved).unwrap();
    let opts = SolveOptions { reference: Some(r.w.clone()), ..Default::default() };
    let mut taus = Vec::new();
    for seed in 0..10 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut init = default_init(&qp.problem).unwrap();
        for x in init.x.iter_mut() {
            x.mapv_inplace(|_| rng.random_range(-2.0..2.0));
        }
        for (i, blk) in qp.problem.blocks.iter().enumerate() {
            init.xi[i] = blk.function.subgradient(init.x[i].view()).unwrap();
        }
        init.lambda.mapv_inplace(|_| rng.random_range(-2.0..2.0));
        let res = ddrsm_solve_with(&qp.problem, &tight(&qp.problem, beta), init, &opts).unwrap();
        taus.push(error_bound_probe(&res.trace).unwrap().tau_hat);
    }
    let (lo, hi) = taus.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
    assert!(hi <= 2.0 * lo, "{taus:?}");
}
