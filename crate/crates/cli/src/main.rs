//! `ppg-affect` command-line tool.
//!
//! Exit status: 0 on success, 1 when a command fails (bad data, invalid
//! configuration, failed gradient check), 2 on a usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "ppg-affect", version, about = "Valence/arousal classification from raw PPG")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset in the canonical layout.
    Synth(SynthArgs),
    /// Convert a raw PPGE download into the canonical layout.
    ImportPpge(ImportArgs),
    /// Filter, window and standardize a dataset.
    Preprocess(Overrides),
    /// Train on an explicit subject split.
    Train(TrainArgs),
    /// Leave-one-subject-out evaluation.
    Loso(LosoArgs),
    /// Render saved evaluation reports as a table.
    Report(ReportArgs),
    /// Check every layer's gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with generator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub trials: Option<u32>,
    /// Record length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, clap::Args)]
pub struct ImportArgs {
    /// Directory of the raw download.
    #[arg(long)]
    pub raw: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Ratings at or above this value map to class 1.
    #[arg(long, default_value_t = 5.0)]
    pub threshold: f64,
    /// Sampling rate of the raw signals.
    #[arg(long, default_value_t = 100.0)]
    pub fs: f64,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: Overrides,
    /// Subjects held out for testing (repeatable or comma-separated).
    #[arg(long = "test-subject", value_delimiter = ',')]
    pub test_subjects: Vec<String>,
    /// Validation subjects; drawn from the training subjects when omitted.
    #[arg(long = "val-subject", value_delimiter = ',')]
    pub val_subjects: Vec<String>,
}

#[derive(Debug, clap::Args)]
pub struct LosoArgs {
    #[command(flatten)]
    pub run: Overrides,
    /// Also write each fold's trained model.
    #[arg(long)]
    pub save_models: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TableFormat {
    Markdown,
    Csv,
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// Report JSON files written by `loso` (a single report or a list).
    #[arg(long = "input", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = TableFormat::Markdown)]
    pub format: TableFormat,
    /// Write the table here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random configurations per layer.
    #[arg(long, default_value_t = 20)]
    pub configs: usize,
    /// Also write the results as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        // Help and version exit 0; usage errors exit 2.
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::ImportPpge(a) => commands::import_ppge(&a),
        Command::Preprocess(o) => commands::preprocess(&o),
        Command::Train(a) => commands::train(&a),
        Command::Loso(a) => commands::loso(&a),
        Command::Report(a) => commands::report(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
