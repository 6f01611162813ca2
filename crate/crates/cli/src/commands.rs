use std::path::{Path, PathBuf};

use ddrsm::admm::AdmmParams;
use ddrsm::bench::{
    generate_cs_instance_with, run_cs_benchmark, run_cs_cell, run_rpca_benchmark, BenchReport, BenchRow, CsBenchConfig,
    RpcaBenchConfig, SolverChoice,
};
use ddrsm::config::{load_toml, ProblemConfig};
use ddrsm::diagnostics::{diagnose_trace, FejerParams, Provenance, ReferenceFile, ReferenceSolution, CERTIFY_TOL};
use ddrsm::problem::{beta_admissible_range, validate_problem, ValidationReport};
use ddrsm::{ddrsm_solve_with, default_init, SolveOptions, SolveStatus, SolveTrace, SolverParams};
use ndarray::Array1;
use serde_json::json;

use crate::error::{CliError, CliResult, Kind};
use crate::output::OutDir;

pub struct Log {
    pub verbosity: u8,
}

impl Log {
    pub fn info(&self, msg: impl AsRef<str>) {
        if self.verbosity > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn require(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::new(Kind::MissingInput, format!("{}: not found", path.display())))
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn validation_error(report: &ValidationReport, out: &mut OutDir) -> CliError {
    let _ = out.write_json("validation.json", report);
    CliError::new(Kind::ValidationFailed, format!("validation failed: {}", report.violations.join("; ")))
        .with_details(json!(report))
}

fn csv_of(trace: &SolveTrace) -> CliResult<String> {
    Ok(trace.to_csv_string()?)
}

fn report_csv(report: &BenchReport) -> CliResult<String> {
    Ok(report.to_csv_string()?)
}

pub struct SolveArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub reference: Option<PathBuf>,
    pub save_reference: bool,
    pub record_time: bool,
}

pub fn solve(a: &SolveArgs, log: &Log) -> CliResult<()> {
    require(&a.config)?;
    let cfg = ProblemConfig::from_path(&a.config).map_err(|e| CliError::reading(&a.config, e))?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let problem = cfg.problem(base, a.seed)?;
    let params = cfg.params(&problem, a.seed)?;
    let mut out = OutDir::create(&a.out)?;

    let validation = validate_problem(&problem, &params);
    for w in &validation.warnings {
        log.info(format!("warning: {w}"));
    }
    if !validation.is_valid() {
        return Err(validation_error(&validation, &mut out));
    }

    let mut opts = SolveOptions { record_time: a.record_time, ..SolveOptions::default() };
    if let Some(path) = &a.reference {
        require(path)?;
        let r = ReferenceFile::read(path).map_err(|e| CliError::reading(path, e))?;
        let len = problem.total_dim() + problem.coupling.rows();
        if r.w.len() != len {
            return Err(CliError::new(
                Kind::ValidationFailed,
                format!("reference has {} entries, the problem needs {len}", r.w.len()),
            ));
        }
        if (r.beta - params.beta).abs() > 1e-12 * params.beta.abs().max(1.0) {
            return Err(CliError::new(
                Kind::ValidationFailed,
                format!("reference was built with β = {}, the run uses β = {}", r.beta, params.beta),
            ));
        }
        opts.reference = Some(Array1::from(r.w));
    }

    log.info(format!("solving: β = {}, ρ = {}, max_iter = {}", params.beta, params.rho, params.max_iter));
    let init = default_init(&problem)?;
    let res = ddrsm_solve_with(&problem, &params, init, &opts)?;
    let last = res.trace.last();
    log.info(format!("{} after {} iterations", res.status.as_str(), res.iterations));

    out.write("trace.csv", csv_of(&res.trace)?)?;
    let to_vecs = |v: &[Array1<f64>]| v.iter().map(|b| b.to_vec()).collect::<Vec<_>>();
    out.write_json(
        "solution.json",
        &json!({
            "status": res.status,
            "iterations": res.iterations,
            "natural_norm": last.map(|r| r.natural_norm),
            "objective": last.map(|r| r.objective),
            "x": to_vecs(&res.state.x),
            "xi": to_vecs(&res.state.xi),
            "lambda": res.state.lambda.to_vec(),
        }),
    )?;
    if a.save_reference {
        let r = ReferenceSolution::certify(res.state.clone(), &problem, params.beta, Provenance::OracleSolved)
            .map_err(|e| CliError::new(Kind::Runtime, format!("final iterate is not a certified reference: {e}")))?;
        out.write_json("reference.json", &r.to_file())?;
    }
    let upper = beta_admissible_range(&problem, None).ok().filter(|u| u.is_finite());
    out.finish(
        "solve",
        json!({ "config": path_str(&a.config), "seed": a.seed, "reference": a.reference.as_deref().map(path_str) }),
        json!({
            "params": params,
            "coupling_norm": problem.coupling.norm_estimate,
            "beta_upper": upper,
            "record_time": a.record_time,
            "warnings": validation.warnings,
        }),
    )?;
    println!("{} in {} iterations, natural map norm {:e}", res.status.as_str(), res.iterations, last.map_or(f64::NAN, |r| r.natural_norm));
    if res.status == SolveStatus::Diverged {
        return Err(CliError::new(Kind::SolverDiverged, format!("solver diverged after {} iterations", res.iterations)));
    }
    Ok(())
}

pub struct BenchArgs {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub record_time: bool,
}

fn load_or_default<C: Default + serde::de::DeserializeOwned>(path: &Option<PathBuf>) -> CliResult<C> {
    match path {
        Some(p) => {
            require(p)?;
            load_toml(p).map_err(|e| CliError::reading(p, e))
        }
        None => Ok(C::default()),
    }
}

pub fn bench_cs(a: &BenchArgs, log: &Log) -> CliResult<()> {
    let mut cfg: CsBenchConfig = load_or_default(&a.config)?;
    if let Some(j) = a.jobs {
        cfg.jobs = j;
    }
    if let Some(s) = a.seed {
        cfg.seeds = vec![s];
    }
    cfg.record_time |= a.record_time;
    let mut out = OutDir::create(&a.out)?;
    log.info(format!("{} cells × {} seeds on {} workers", cfg.cells.len(), cfg.seeds.len(), cfg.jobs));
    let report = run_cs_benchmark(&cfg)?;
    out.write("bench_cs.csv", report_csv(&report)?)?;
    out.write_json("bench_cs.json", &report)?;
    out.finish("bench-cs", json!({ "config": a.config.as_deref().map(path_str) }), json!(cfg))?;
    print_rows(&report.rows);
    Ok(())
}

pub fn bench_rpca(a: &BenchArgs, log: &Log) -> CliResult<()> {
    let mut cfg: RpcaBenchConfig = load_or_default(&a.config)?;
    if let Some(j) = a.jobs {
        cfg.jobs = j;
    }
    if let Some(s) = a.seed {
        cfg.seeds = vec![s];
    }
    cfg.record_time |= a.record_time;
    let mut out = OutDir::create(&a.out)?;
    log.info(format!("{} seeds on {} workers", cfg.seeds.len(), cfg.jobs));
    let report = run_rpca_benchmark(&cfg)?;
    out.write("bench_rpca.csv", report_csv(&report)?)?;
    out.write_json("bench_rpca.json", &report)?;
    out.finish("bench-rpca", json!({ "config": a.config.as_deref().map(path_str) }), json!(cfg))?;
    print_rows(&report.rows);
    Ok(())
}

fn print_rows(rows: &[BenchRow]) {
    for r in rows {
        let num = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        println!(
            "{:<16} seed {:<3} {:<16} {:<14} its {:>6} psnr {:>9} rel_err {:>10}",
            r.cell,
            r.seed,
            r.solver,
            r.status,
            r.iterations.map_or("-".into(), |i| i.to_string()),
            num(r.psnr),
            num(r.rel_err_low_rank),
        );
    }
}

pub struct CompareArgs {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub cell: usize,
    pub beta: f64,
    pub rho: f64,
    pub admm_beta: Option<f64>,
    pub max_iter: Option<usize>,
    pub record_time: bool,
}

/// DDRSM and ADMM on one compressed-sensing cell at a fixed `β`.
pub fn compare(a: &CompareArgs, log: &Log) -> CliResult<()> {
    let cfg: CsBenchConfig = load_or_default(&a.config)?;
    let cell = *cfg.cells.get(a.cell).ok_or_else(|| {
        CliError::new(Kind::InvalidConfig, format!("cell index {} out of range ({} cells)", a.cell, cfg.cells.len()))
    })?;
    let seed = a.seed.or(cfg.seeds.first().copied()).unwrap_or(0);
    let max_iter = a.max_iter.unwrap_or(cfg.max_iter);
    let admm_beta = a.admm_beta.unwrap_or(a.beta);
    let mut out = OutDir::create(&a.out)?;

    let instance =
        generate_cs_instance_with::<f64>(cell.m_rows, cell.n, cell.sparsity, cfg.noise_var, cfg.delta, seed, cfg.measurement)?;
    let reg = cfg.model.regularizer::<f64>()?;
    let problem = instance.problem(&reg)?;
    let params = SolverParams::defaults_for(&problem)?.with_beta(a.beta).with_rho(a.rho).with_max_iter(max_iter);
    let mut validation = validate_problem(&problem, &params);
    if let Err(e) = AdmmParams::for_instance(&instance, admm_beta).and_then(|p| p.validate(instance.m_norm)) {
        validation.violations.push(format!("ADMM: {e}"));
    }
    if !validation.is_valid() {
        return Err(validation_error(&validation, &mut out));
    }

    let mut report = BenchReport::new("compare");
    let mut statuses = Vec::new();
    let choices = [SolverChoice::Ddrsm { beta: a.beta, rho: a.rho }, SolverChoice::Admm { beta: admm_beta }];
    for choice in choices {
        log.info(format!("running {}", choice.name()));
        let r = run_cs_cell(&instance, &cfg.model, choice, max_iter, cfg.psnr_target, a.record_time)?;
        let base = BenchRow::new("compare", cell.label(), cell.m_rows, cell.n, cell.sparsity, seed, choice.name());
        report.rows.push(r.fill_row(base));
        out.write(&format!("{}_trace.csv", choice.name()), csv_of(&r.result.trace)?)?;
        statuses.push((choice.name(), r.result.status));
    }
    out.write("compare.csv", report_csv(&report)?)?;
    out.finish(
        "compare",
        json!({ "config": a.config.as_deref().map(path_str), "seed": seed, "cell": a.cell }),
        json!({
            "cell": cell,
            "model": cfg.model,
            "noise_var": cfg.noise_var,
            "delta": cfg.delta,
            "measurement": cfg.measurement,
            "ddrsm": params,
            "admm_beta": admm_beta,
            "psnr_target": cfg.psnr_target,
            "coupling_norm": problem.coupling.norm_estimate,
            "record_time": a.record_time,
            "warnings": validation.warnings,
        }),
    )?;
    print_rows(&report.rows);
    if let Some((name, _)) = statuses.iter().find(|(_, s)| *s == SolveStatus::Diverged) {
        return Err(CliError::new(Kind::SolverDiverged, format!("{name} diverged")));
    }
    Ok(())
}

pub struct DiagnoseArgs {
    pub trace: PathBuf,
    pub reference: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub beta: Option<f64>,
    pub rho: f64,
    pub norm_a: Option<f64>,
    pub c0: f64,
    pub fejer_c: Option<f64>,
}

pub fn diagnose(a: &DiagnoseArgs, log: &Log) -> CliResult<()> {
    require(&a.trace)?;
    let trace = SolveTrace::read_csv_path(&a.trace).map_err(|e| CliError::reading(&a.trace, e))?;
    let mut beta = a.beta;
    let mut kkt_norm = None;
    if let Some(path) = &a.reference {
        require(path)?;
        let r = ReferenceFile::read(path).map_err(|e| CliError::reading(path, e))?;
        if r.kkt_norm.is_nan() || r.kkt_norm > CERTIFY_TOL {
            return Err(CliError::new(
                Kind::ValidationFailed,
                format!("reference natural map norm {:e} exceeds {CERTIFY_TOL:e}", r.kkt_norm),
            ));
        }
        if beta.is_some_and(|b| b != r.beta) {
            return Err(CliError::new(Kind::ValidationFailed, format!("--beta disagrees with the reference (β = {})", r.beta)));
        }
        beta = Some(r.beta);
        kkt_norm = Some(r.kkt_norm);
    }
    let fejer = match (beta, a.norm_a) {
        (Some(beta), Some(norm_a)) => Some(FejerParams { beta, rho: a.rho, norm_a, c0: a.c0, explicit_c: a.fejer_c }),
        _ => {
            log.info("Fejér check skipped: needs β (or a reference) and --norm-a");
            None
        }
    };
    let report = diagnose_trace(&trace, fejer);
    let body = json!({ "reference_kkt_norm": kkt_norm, "report": report });
    match &a.out {
        Some(dir) => {
            let mut out = OutDir::create(dir)?;
            out.write_json("diagnostics.json", &body)?;
            out.finish(
                "diagnose",
                json!({ "trace": path_str(&a.trace), "reference": a.reference.as_deref().map(path_str) }),
                json!({ "beta": beta, "rho": a.rho, "norm_a": a.norm_a, "c0": a.c0, "fejer_c": a.fejer_c }),
            )?;
            summarize(&body);
        }
        None => println!("{}", serde_json::to_string_pretty(&body).unwrap_or_default()),
    }
    Ok(())
}

fn summarize(body: &serde_json::Value) {
    let r = &body["report"];
    println!("records: {}", r["records"]);
    if !r["rate"].is_null() {
        println!("rate: {} (R² {})", r["rate"]["rate"], r["rate"]["r_squared"]);
    }
    if !r["error_bound"].is_null() {
        println!("error bound τ̂: {}", r["error_bound"]["tau_hat"]);
    }
    if !r["fejer"].is_null() {
        println!("Fejér violations: {} of {}", r["fejer"]["violations"], r["fejer"]["checked"]);
    }
}
