// SPDX-License-Identifier: Apache-2.0

//! Command-line front end.
//!
//! `oqs-chain coeffs|evolve|sweep-dt|check --config <file> --out <dir>
//! [--seed N] [--threads N]`. Exit codes: 0 success, 1 output I/O failure,
//! 2 configuration error, 3 numeric failure, 4 failed checks.

pub mod check;
pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ScenarioConfig;

/// Failure of a CLI run, mapped to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(#[from] crate::Error),
    #[error("I/O error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{failed} check(s) failed")]
    ChecksFailed { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Io { .. } => 1,
            Self::Config(_) => 2,
            Self::Numeric(_) => 3,
            Self::ChecksFailed { .. } => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "oqs-chain",
    version,
    about = "Reduced dynamics and transport of a three-oscillator chain between two baths"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed of the sampling oracles (overrides `seed` in the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 or unset uses all cores.
    #[arg(long, env = "OQS_CHAIN_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump generator coefficients as JSON.
    Coeffs(CommonArgs),
    /// Evolve from the initial state; write trajectories and transport data.
    Evolve(CommonArgs),
    /// Stationary sink/source terms along the coarse-graining grid.
    SweepDt(CommonArgs),
    /// Run the invariant suite and write a pass/fail report.
    Check(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Self::Coeffs(a) | Self::Evolve(a) | Self::SweepDt(a) | Self::Check(a) => a,
        }
    }
}

/// Load the scenario and apply command-line overrides.
pub fn load_config(args: &CommonArgs) -> Result<(ScenarioConfig, PathBuf), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = ScenarioConfig::from_toml_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set output_dir".into()))?;
    Ok((cfg, out))
}

/// Execute a parsed command.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let common = cli.command.common();
    let (cfg, out) = load_config(common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} threads: {e}", common.threads.unwrap_or(0))))?;
    output::ensure_dir(&out)?;
    pool.install(|| match &cli.command {
        Command::Coeffs(_) => commands::cmd_coeffs(&cfg, &out).map(|files| {
            println!("wrote {} coefficient file(s) to {}", files.len(), out.display());
        }),
        Command::Evolve(_) => commands::cmd_evolve(&cfg, &out),
        Command::SweepDt(_) => commands::cmd_sweep_dt(&cfg, &out).map(|s| {
            println!(
                "sweep-dt: {} stationary point(s), {} failure(s)",
                s.rows.len(),
                s.failures.len()
            );
        }),
        Command::Check(_) => {
            let report = check::run_checks(&cfg);
            let json = serde_json::to_string_pretty(&report).expect("reports serialize");
            output::write_text(&out.join("check.json"), &(json + "\n"))?;
            for c in &report.checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                println!("{status} {}: {}", c.name, c.detail);
            }
            if report.passed {
                Ok(())
            } else {
                Err(CliError::ChecksFailed { failed: report.failed })
            }
        }
    })
}

/// Parse arguments, run, and map the outcome to a process exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("oqs-chain: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
