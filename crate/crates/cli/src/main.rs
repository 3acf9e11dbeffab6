mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use betdetect::evaluation::ReportFormat;
use betdetect::ErrorClass;
use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::Context;
use crate::config::Settings;

/// Sequential detection of machine-generated text from score streams.
#[derive(Debug, Parser)]
#[command(name = "betdetect", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for streams, randomized checks and calibration shuffles.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Where artifacts are written.
    #[arg(long, global = true, env = "BETDETECT_OUTPUT_DIR", default_value = "out")]
    output_dir: PathBuf,

    /// Override a configuration key, e.g. `--set alpha=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Report format for `evaluate` (both when omitted).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one sequential test and write outcome.json.
    Detect,
    /// Estimate epsilon and d from score pools and write calibration.json.
    Calibrate,
    /// Run the batched permutation baseline and write baseline.json.
    Baseline,
    /// Monte Carlo evaluation over a grid of levels; writes report.csv and report.json.
    Evaluate,
    /// List built-in stream presets.
    Presets,
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::InputData => 3,
        ErrorClass::Numerical => 4,
    }
}

fn run(cli: Cli) -> betdetect::Result<()> {
    let settings = Settings::load(cli.config.as_deref(), &cli.overrides)?;
    let seed = match cli.seed {
        Some(s) => s,
        None => settings.u64("seed")?.unwrap_or(0),
    };
    let ctx = Context {
        settings,
        seed,
        output_dir: cli.output_dir,
        format: cli.format.map(|f| match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }),
    };
    match cli.command {
        Command::Detect => commands::detect(&ctx),
        Command::Calibrate => commands::calibrate(&ctx),
        Command::Baseline => commands::baseline(&ctx),
        Command::Evaluate => commands::evaluate(&ctx),
        Command::Presets => commands::presets(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
