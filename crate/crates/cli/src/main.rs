//! `padic-heat`: certify symbols, tabulate heat kernels, solve Cauchy
//! problems, simulate paths and run the verification suite.
//!
//! Exit codes: 0 success (or an elliptic symbol), 1 errors and failed checks,
//! 2 a non-elliptic symbol, 3 an inconclusive certification.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ProblemConfig;

#[derive(Parser, Debug)]
#[command(name = "padic-heat", version, about = "Heat kernels of elliptic operators over p-adic fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; every field has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `tol`.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `jobs`.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certify ellipticity and report C0, C1 and the table modulus.
    Certify,
    /// Tabulate Z(x,t) over the space and time grids.
    Kernel,
    /// Tabulate the Cauchy solution u = Z * phi.
    Solve,
    /// Sample paths and an occupancy histogram.
    Simulate,
    /// Run the invariant suite.
    Verify {
        /// Check to run; repeatable. All checks when omitted.
        #[arg(long = "check")]
        checks: Vec<String>,
        /// Drop one class from every certificate before checking.
        #[arg(long)]
        corrupt_certificate: bool,
    },
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let mut cfg = ProblemConfig::load(cli.common.config.as_deref())?;
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.common.tol {
        cfg.tol = t;
    }
    if let Some(o) = cli.common.out {
        cfg.output.dir = o;
    }
    if let Some(j) = cli.common.jobs {
        cfg.jobs = Some(j);
    }
    if let Command::Verify { checks, corrupt_certificate } = &cli.command {
        if !checks.is_empty() {
            cfg.verify.checks = checks.clone();
        }
        cfg.verify.corrupt_certificate |= corrupt_certificate;
    }
    if !(cfg.tol.is_finite() && cfg.tol > 0.0) {
        anyhow::bail!("tol must be positive, got {}", cfg.tol);
    }
    if let Some(j) = cfg.jobs {
        if j == 0 {
            anyhow::bail!("jobs must be at least 1");
        }
        padic_heat::par::configure_threads(j);
    }
    cfg.fill_defaults();
    commands::write_effective_config(&cfg)?;
    match cli.command {
        Command::Certify => commands::certify(&cfg),
        Command::Kernel => commands::kernel(&cfg),
        Command::Solve => commands::solve(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Verify { .. } => commands::verify(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
