//! `crossed-fields-lab`: runs the verification experiments from a TOML config.
//!
//! Exit codes: 0 pass, 1 tolerance failure, 2 configuration error,
//! 3 failed precondition.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crossed_fields_core::Error;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "crossed-fields-lab",
    version,
    about = "Spectral shift experiments for crossed magnetic and electric fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare the difference and formula routes for the shift function.
    VerifyTrace(Args),
    /// Compare numeric shift-function increments with the leading Weyl term.
    Semiclassical(Args),
    /// Classify eigenpairs in a window and apply the virial exclusion.
    Scan(Args),
    /// Write c0, gamma0 and Tauberian kernel curves.
    Curves(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Precondition(String),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. } | Error::GridTooSmall { .. } => CliError::Config(e.to_string()),
            _ => CliError::Precondition(e.to_string()),
        }
    }
}

type Runner = fn(&ExperimentConfig, &std::path::Path) -> Result<Outcome, CliError>;

pub enum Outcome {
    Pass,
    Fail(String),
}

/// The Cooper Lake DGEMM kernels in some OpenBLAS builds corrupt dense
/// eigenvectors; pin the Haswell kernels unless the caller chose a core type.
#[cfg(unix)]
fn pin_blas_kernels() {
    use std::os::unix::process::CommandExt;
    if std::env::var_os("OPENBLAS_CORETYPE").is_some() {
        return;
    }
    if let Ok(exe) = std::env::current_exe() {
        let err = std::process::Command::new(exe)
            .args(std::env::args_os().skip(1))
            .env("OPENBLAS_CORETYPE", "Haswell")
            .exec();
        eprintln!("warning: could not re-exec with OPENBLAS_CORETYPE set: {err}");
    }
}

#[cfg(not(unix))]
fn pin_blas_kernels() {}

fn main() -> ExitCode {
    pin_blas_kernels();
    let cli = Cli::parse();
    let (args, run): (&Args, Runner) = match &cli.command {
        Command::VerifyTrace(a) => (a, commands::verify_trace),
        Command::Semiclassical(a) => (a, commands::semiclassical),
        Command::Scan(a) => (a, commands::scan),
        Command::Curves(a) => (a, commands::curves),
    };
    let result = ExperimentConfig::load(&args.config).and_then(|cfg| {
        let out = cfg.out_dir(args.out.as_deref());
        run(&cfg, &out)
    });
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail(msg)) => {
            eprintln!("FAIL: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) | Err(CliError::Io(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Precondition(msg)) => {
            eprintln!("precondition failed: {msg}");
            ExitCode::from(3)
        }
    }
}
