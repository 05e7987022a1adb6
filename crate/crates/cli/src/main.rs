//! `esscore`: corpus statistics, back-translation augmentation, score
//! adjustment, cross-validated training, and report rendering.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{
    adjust::AdjustArgs, backtranslate::BacktranslateCmd, folds::FoldsArgs, ingest::IngestArgs,
    oov::OovArgs, report::ReportArgs, stats::StatsArgs, train::TrainArgs,
};

#[derive(Parser)]
#[command(name = "esscore", version, about = "Essay scoring and augmentation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus file and write the normalized JSONL cache
    Ingest(IngestArgs),
    /// Per-prompt score ranges and distribution statistics
    Stats(StatsArgs),
    /// Count per-prompt tokens undefined in an embedding file
    Oov(OovArgs),
    /// Generate, import, or verify back-translation sets
    #[command(subcommand)]
    Backtranslate(BacktranslateCmd),
    /// Apply a score-adjustment plan to back-translations
    Adjust(AdjustArgs),
    /// Emit cross-validation partitions
    Folds(FoldsArgs),
    /// Run a training experiment
    Train(TrainArgs),
    /// Re-render summary tables from stored results
    Report(ReportArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Ingest(args) => commands::ingest::run(args),
        Command::Stats(args) => commands::stats::run(args),
        Command::Oov(args) => commands::oov::run(args),
        Command::Backtranslate(cmd) => commands::backtranslate::run(cmd),
        Command::Adjust(args) => commands::adjust::run(args),
        Command::Folds(args) => commands::folds::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Report(args) => commands::report::run(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            // One machine-parsable error line on stderr.
            eprintln!("{}", serde_json::json!({ "error": format!("{error:#}") }));
            ExitCode::FAILURE
        }
    }
}
