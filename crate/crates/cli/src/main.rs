mod analyze;
mod changepoint;
mod fit;
mod input;
mod output;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use wfbws::inference::BootstrapInit;

#[derive(Parser, Debug)]
#[command(name = "wfbws", version, about = "Wright-Fisher selection inference with the Beta-with-Spikes likelihood")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a Wright-Fisher trajectory.
    Simulate(simulate::SimulateArgs),
    /// Fit (N, s) and test selection against drift.
    Fit(fit::FitArgs),
    /// Detect change points in (N, s).
    Changepoint(changepoint::ChangepointArgs),
    /// Ellipses, region classes, G-tests and approximation sweeps.
    Analyze(analyze::AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitArg {
    Observed,
    Uniform,
}

impl From<InitArg> for BootstrapInit {
    fn from(v: InitArg) -> Self {
        match v {
            InitArg::Observed => BootstrapInit::ObservedStart,
            InitArg::Uniform => BootstrapInit::Uniform,
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// Seed for every random draw.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (standard output if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format (each command has its own default).
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl Common {
    /// Fill in the command's default format so the echoed config is complete.
    pub fn resolve(&mut self, default: Format) -> Format {
        *self.format.get_or_insert(default)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate::run(&a),
        Command::Fit(a) => fit::run(&a),
        Command::Changepoint(a) => changepoint::run(&a),
        Command::Analyze(a) => analyze::run(&a),
    };
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            log::error!("{failures} item(s) failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
