//! `ddrsm` command-line front end.
//!
//! Exit status: 0 success, 2 usage, 3 missing input, 4 invalid config,
//! 5 unwritable output, 6 validation failure, 7 solver divergence,
//! 8 other runtime failure. Failures print a JSON error object on stderr.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use commands::{BenchArgs, CompareArgs, DiagnoseArgs, Log, SolveArgs};
use error::CliResult;

#[derive(Parser)]
#[command(name = "ddrsm", version, about = "Distributed Douglas-Rachford splitting solver and benchmarks")]
struct Cli {
    /// Progress messages on stderr; repeat for more.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem described by a TOML file.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reference solution (JSON) used to fill the dist_ref trace column.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Also write the final iterate as reference.json if it certifies as a KKT point.
        #[arg(long)]
        save_reference: bool,
        /// Record wall-clock time in the trace (output is then not reproducible).
        #[arg(long)]
        record_time: bool,
    },
    /// Compressed-sensing benchmark (defaults to the four-cell table).
    BenchCs(BenchFlags),
    /// Low-rank + sparse benchmark.
    BenchRpca(BenchFlags),
    /// DDRSM against ADMM on one compressed-sensing cell at a fixed β.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Index into the config's cell list.
        #[arg(long, default_value_t = 0)]
        cell: usize,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        /// ADMM penalty; defaults to --beta.
        #[arg(long)]
        admm_beta: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        record_time: bool,
    },
    /// Rate fit, error-bound probe and Fejér check on a recorded trace.
    Diagnose {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Write diagnostics.json here instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// β of the run; taken from the reference when given.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        /// ‖A‖ used by the Fejér constant; the check is skipped without it.
        #[arg(long)]
        norm_a: Option<f64>,
        /// Weak convexity modulus of the run.
        #[arg(long, default_value_t = 0.0)]
        c0: f64,
        /// Explicit Fejér constant, required when c0 > 0.
        #[arg(long)]
        fejer_c: Option<f64>,
    },
}

#[derive(clap::Args)]
struct BenchFlags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    record_time: bool,
}

impl BenchFlags {
    fn args(self) -> BenchArgs {
        BenchArgs { config: self.config, out: self.out, jobs: self.jobs, seed: self.seed, record_time: self.record_time }
    }
}

fn run(command: Command, log: &Log) -> (CliResult<()>, Option<PathBuf>) {
    match command {
        Command::Solve { config, out, seed, reference, save_reference, record_time } => {
            let a = SolveArgs { config, out, seed, reference, save_reference, record_time };
            (commands::solve(&a, log), Some(a.out))
        }
        Command::BenchCs(f) => {
            let a = f.args();
            (commands::bench_cs(&a, log), Some(a.out))
        }
        Command::BenchRpca(f) => {
            let a = f.args();
            (commands::bench_rpca(&a, log), Some(a.out))
        }
        Command::Compare { config, out, seed, cell, beta, rho, admm_beta, max_iter, record_time } => {
            let a = CompareArgs { config, out, seed, cell, beta, rho, admm_beta, max_iter, record_time };
            (commands::compare(&a, log), Some(a.out))
        }
        Command::Diagnose { trace, reference, out, beta, rho, norm_a, c0, fejer_c } => {
            let a = DiagnoseArgs { trace, reference, out, beta, rho, norm_a, c0, fejer_c };
            (commands::diagnose(&a, log), a.out.clone())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let log = Log { verbosity: cli.verbose };
    match run(cli.command, &log) {
        (Ok(()), _) => ExitCode::SUCCESS,
        (Err(e), out) => {
            if let Some(dir) = out {
                output::write_error_report(&dir, &e);
            }
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code as u8)
        }
    }
}
