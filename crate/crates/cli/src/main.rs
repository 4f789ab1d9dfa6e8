//! `kopi` command-line front end.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kopi::{ErrorClass, KopiError};

use config::Overrides;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Kopi(#[from] KopiError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Kopi(e) => match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numerical => 4,
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "kopi", version, about = "Knockoff selection with simultaneous FDP bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset and its ground truth.
    #[command(args_override_self = true)]
    Simulate(Overrides),
    /// Calibrate a threshold family and fill the null cache.
    #[command(args_override_self = true)]
    Calibrate(Overrides),
    /// Run the selectors on a dataset or a simulated one.
    #[command(args_override_self = true)]
    Infer(Overrides),
    /// Run a simulation sweep and write reports.
    #[command(args_override_self = true)]
    Bench(Overrides),
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("KOPI_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Config(format!("KOPI_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Simulate(o) => commands::simulate(&config::AppConfig::resolve(&o)?),
        Command::Calibrate(o) => commands::calibrate(&config::AppConfig::resolve(&o)?),
        Command::Infer(o) => commands::infer(&config::AppConfig::resolve(&o)?),
        Command::Bench(o) => commands::bench(&config::AppConfig::resolve(&o)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
