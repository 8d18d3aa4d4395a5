//! Command-line driver: simulation, baselines, data generation, surrogate
//! training, iterative optimization and report comparison.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Exit codes: 0 success, 1 runtime failure, 2 configuration or validation,
/// 3 sun-position domain error, 4 external solver failure.
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }
}

impl From<helio_aim::Error> for CliError {
    fn from(err: helio_aim::Error) -> Self {
        use helio_aim::Error::*;
        let code = match &err {
            InvalidConfig(_) | Shape(_) | Serialization(_) => 2,
            Domain(_) => 3,
            Backend(_) => 4,
            TrainingDiverged(_) | Encoding(_) | Run(_) | Io(_) => 1,
        };
        CliError { code, message: err.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "helio-aim", version, about = "Heliostat-field aiming simulation and optimization")]
struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed override for data generation and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a flux map for an aiming strategy and write map, profiles
    /// and metrics.
    Simulate {
        /// Solar hour (defaults to the first configured hour).
        #[arg(long)]
        hour: Option<f64>,
        /// Aim source: "equatorial", "sweep", or a `group,k` CSV file.
        #[arg(long)]
        aim: String,
    },
    /// Compute a classical baseline aiming strategy.
    Baseline {
        #[arg(long)]
        hour: Option<f64>,
        #[arg(long, value_enum)]
        kind: BaselineKind,
    },
    /// Generate a scored dataset of random aiming strategies.
    Datagen {
        #[arg(long)]
        hour: Option<f64>,
        /// Iteration index (sampling is centered on --incumbent when > 1).
        #[arg(long, default_value_t = 1)]
        iteration: usize,
        /// Sample count (defaults to the configured schedule).
        #[arg(long)]
        size: Option<usize>,
        /// Incumbent aim CSV, required for iterations > 1.
        #[arg(long)]
        incumbent: Option<PathBuf>,
    },
    /// Train the score surrogate from a dataset CSV.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the iterative optimization and write the run log, final aim
    /// vector and metrics.
    Optimize {
        #[arg(long)]
        hour: Option<f64>,
    },
    /// Compare the metrics of two result directories (deltas relative to B).
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Equatorial,
    Sweep,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let Cli { config, out, seed, command } = cli;
    let ctx = || -> Result<commands::Context, CliError> {
        let path = config
            .as_ref()
            .ok_or_else(|| CliError::config("--config is required for this command"))?;
        let run = config::RunConfig::load(path).map_err(CliError::config)?;
        commands::Context::new(run, out.clone(), seed)
    };
    match command {
        Command::Simulate { hour, aim } => commands::simulate(&ctx()?, hour, &aim),
        Command::Baseline { hour, kind } => {
            commands::baseline(&ctx()?, hour, matches!(kind, BaselineKind::Equatorial))
        }
        Command::Datagen { hour, iteration, size, incumbent } => {
            commands::datagen(&ctx()?, hour, iteration, size, incumbent.as_deref())
        }
        Command::Train { data } => commands::train(&ctx()?, &data),
        Command::Optimize { hour } => commands::optimize(&ctx()?, hour),
        Command::Compare { a, b } => commands::compare(&a, &b, out.as_deref()),
    }
}
