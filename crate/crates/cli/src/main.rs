//! `graphfdr` command-line front end.
//!
//! Exit codes: 0 on success, 1 on runtime or numerical failure, 2 when the
//! config or an input file is invalid.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "graphfdr",
    version,
    about = "FDR-controlled detection over graph x time data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Paths {
    /// TOML config file for the subcommand.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Directory receiving the outputs; created if missing.
    #[arg(long, value_name = "PATH", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Select bandwidths by BIC and fit the coefficients.
    Fit(Paths),
    /// Threshold local false discovery rates from a fit report.
    Detect(Paths),
    /// Write one synthetic dataset with ground truth.
    Simulate(Paths),
    /// Monte Carlo FDR and power of plug-in, oracle and BH.
    Benchmark(Paths),
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<graphfdr::Error> for CliError {
    fn from(e: graphfdr::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(p) => commands::fit(&p.config, &p.out_dir),
        Command::Detect(p) => commands::detect(&p.config, &p.out_dir),
        Command::Simulate(p) => commands::simulate(&p.config, &p.out_dir),
        Command::Benchmark(p) => commands::benchmark(&p.config, &p.out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
