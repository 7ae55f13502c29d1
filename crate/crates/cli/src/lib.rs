//! Experiment runner for the quasi-Newton deterministic policy gradient
//! library: LQR verification, Hessian scans, and learning runs on the scalar
//! LQR and the cart-pendulum.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use qnpg::lqr::LqrCurvature;
use qnpg::optimizer::{CurvatureSource, LearningTrace};
use qnpg::verify::CheckOutcome;

use crate::commands::CartpoleRun;
pub use crate::config::{Command, MethodChoice, RunConfig};
pub use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::output::Table;

#[derive(Debug, Parser)]
#[command(name = "qnpg", version, about = "Quasi-Newton deterministic policy gradient experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,

    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Check the closed-form LQR model against finite differences and quadrature.
    VerifyLqr(Flags),
    /// Tabulate J, its derivatives, H, Λ and F over a gain grid.
    ScanHessian(Flags),
    /// Policy learning on the scalar LQR.
    LearnLqr(Flags),
    /// Policy learning on the cart-pendulum with estimated curvature.
    LearnCartpole(Flags),
}

impl Sub {
    pub fn split(self) -> (Command, Flags) {
        match self {
            Sub::VerifyLqr(f) => (Command::VerifyLqr, f),
            Sub::ScanHessian(f) => (Command::ScanHessian, f),
            Sub::LearnLqr(f) => (Command::LearnLqr, f),
            Sub::LearnCartpole(f) => (Command::LearnCartpole, f),
        }
    }
}

/// Flags mirror the keys of the JSON config and override them.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON config file, or a manifest from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV output path; a manifest is written next to it. Without it the CSV
    /// goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub sigma0_sq: Option<f64>,
    #[arg(long)]
    pub sigma_sq: Option<f64>,
    /// Initial parameters, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta0: Option<Vec<f64>>,
    /// gd, ngd, qn, qn_reg or all.
    #[arg(long, value_parser = clap::builder::ValueParser::new(|s: &str| s.parse::<MethodChoice>()))]
    pub method: Option<MethodChoice>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Fisher weight added to H before eigenvalue-floor regularization.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lambda_floor: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub n_outer: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub n_q: Option<usize>,
    #[arg(long)]
    pub fd_step: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta_max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    /// oracle or estimated.
    #[arg(long, value_parser = clap::builder::ValueParser::new(config::parse_curvature))]
    pub curvature: Option<CurvatureSource>,
    /// Number of consecutive seeds (cart-pendulum).
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Per-coordinate transition noise variance (cart-pendulum).
    #[arg(long)]
    pub noise_var: Option<f64>,
    /// Rollouts behind each J estimate (cart-pendulum).
    #[arg(long)]
    pub eval_rollouts: Option<usize>,
}

impl Flags {
    pub fn to_config(&self) -> RunConfig {
        RunConfig {
            seed: self.seed,
            out: self.out.clone(),
            gamma: self.gamma,
            sigma0_sq: self.sigma0_sq,
            sigma_sq: self.sigma_sq,
            theta0: self.theta0.clone(),
            method: self.method,
            alpha: self.alpha,
            beta: self.beta,
            lambda_floor: self.lambda_floor,
            iters: self.iters,
            n_outer: self.n_outer,
            horizon: self.horizon,
            n_q: self.n_q,
            fd_step: self.fd_step,
            theta_min: self.theta_min,
            theta_max: self.theta_max,
            points: self.points,
            curvature: self.curvature,
            seeds: self.seeds,
            noise_var: self.noise_var,
            eval_rollouts: self.eval_rollouts,
        }
    }

    /// File values (if any) overridden by flags, then command defaults.
    pub fn resolve(&self, command: Command) -> Result<RunConfig, CliError> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path, command)?,
            None => RunConfig::default(),
        };
        Ok(base.overlay(self.to_config()).with_defaults(command))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Checks(Vec<CheckOutcome>),
    Scan(Vec<LqrCurvature>),
    Lqr(Vec<LearningTrace>),
    Cartpole(Vec<CartpoleRun>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: Command,
    pub config: RunConfig,
    pub payload: Payload,
    pub table: Table,
    pub manifest: Option<PathBuf>,
}

impl RunReport {
    /// Names of failed verification checks.
    pub fn failures(&self) -> Vec<&'static str> {
        match &self.payload {
            Payload::Checks(c) => c.iter().filter(|c| !c.passed).map(|c| c.name).collect(),
            _ => Vec::new(),
        }
    }
}

/// Runs one command on a resolved config and writes its CSV (and manifest)
/// when `config.out` is set.
pub fn execute(command: Command, config: RunConfig) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let (payload, table) = match command {
        Command::VerifyLqr => {
            let checks = commands::verify_lqr(&config)?;
            let t = commands::verify_table(&checks);
            (Payload::Checks(checks), t)
        }
        Command::ScanHessian => {
            let rows = commands::scan_hessian(&config)?;
            let t = commands::scan_table(&rows, config.lqr_config()?.gamma);
            (Payload::Scan(rows), t)
        }
        Command::LearnLqr => {
            let traces = commands::learn_lqr(&config)?;
            let t = commands::learn_lqr_table(&traces);
            (Payload::Lqr(traces), t)
        }
        Command::LearnCartpole => {
            let runs = commands::learn_cartpole(&config)?;
            let t = commands::learn_cartpole_table(&runs);
            (Payload::Cartpole(runs), t)
        }
    };
    let mut manifest = None;
    if let Some(out) = &config.out {
        let file = std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
        table.write_to(std::io::BufWriter::new(file))?;
        let m = RunManifest::new(command, config.clone(), vec![out.clone()], start.elapsed().as_secs_f64());
        manifest = Some(m.write(out)?);
    }
    Ok(RunReport {
        command,
        config,
        payload,
        table,
        manifest,
    })
}

fn summary(report: &RunReport) -> String {
    match &report.payload {
        Payload::Checks(checks) => commands::verify_report(checks),
        Payload::Scan(rows) => format!("{} grid points\n", rows.len()),
        Payload::Lqr(traces) => traces
            .iter()
            .map(|t| {
                let last = t.last();
                format!(
                    "{:<7} alpha {:<5} iters {:>3}  final theta {:>12}  err {:>10}{}\n",
                    t.method.to_string(),
                    t.alpha,
                    last.map_or(0, |r| r.iter),
                    last.map_or("-".into(), |r| format!("{:.8}", r.theta[0])),
                    last.and_then(|r| r.err_to_opt).map_or("-".into(), |e| format!("{e:.2e}")),
                    if t.diverged { "  DIVERGED" } else { "" }
                )
            })
            .collect(),
        Payload::Cartpole(runs) => runs
            .iter()
            .map(|r| {
                format!(
                    "{:<7} seed {:>4}  J_est {:.5} -> {:.5}{}\n",
                    r.trace.method.to_string(),
                    r.seed,
                    r.initial_j(),
                    r.final_j(),
                    if r.trace.diverged { "  DIVERGED" } else { "" }
                )
            })
            .collect(),
    }
}

/// Binary entry point: resolve, execute, print, and turn failed checks into
/// an error.
pub fn run(cli: Cli) -> Result<RunReport, CliError> {
    let (command, flags) = cli.command.split();
    let config = flags.resolve(command)?;
    let report = execute(command, config)?;
    // verification prints its table; other commands stream CSV when there
    // is no output file
    if report.config.out.is_none() && command != Command::VerifyLqr {
        report.table.write_to(std::io::stdout().lock())?;
        eprint!("{}", summary(&report));
    } else {
        print!("{}", summary(&report));
    }
    if let Some(m) = &report.manifest {
        log::info!("manifest written to {}", m.display());
    }
    let failed = report.failures();
    if !failed.is_empty() {
        return Err(CliError::CheckFailed(failed.join(", ")));
    }
    Ok(report)
}
