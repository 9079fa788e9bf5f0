//! smishkit: a batch pipeline for growing scarce SMS threat corpora and
//! comparing augmentation methods with a lightweight classifier.

mod commands;
mod config;
mod errors;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::RunConfig;
use errors::CliError;

#[derive(Parser)]
#[command(
    name = "smishkit",
    version,
    about = "Augment and evaluate SMS threat corpora",
    propagate_version = true
)]
struct Cli {
    /// Run configuration file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, validate, and normalize a corpus to JSONL.
    Ingest(commands::ingest::IngestArgs),
    /// Build stratified k-fold train/test splits.
    Folds(commands::folds::FoldsArgs),
    /// Aggregate annotator votes and stamp principles onto the corpus.
    Annotate(commands::annotate::AnnotateArgs),
    /// Print Fleiss' kappa over an annotation record file.
    Kappa(commands::kappa::KappaArgs),
    /// Grow one fold's train slice by a factor with a chosen method.
    Augment(commands::augment::AugmentArgs),
    /// Character/word count summaries of one or more corpora.
    Stats(commands::stats::StatsArgs),
    /// Train the desk-scale classifier and score it on a test file.
    Eval(commands::evalcmd::EvalArgs),
    /// Compare augmentation runs against the original baseline.
    Report(commands::report::ReportArgs),
    /// Re-run an augmentation from its manifest and diff the output.
    ReplayVerify(commands::replay_verify::ReplayVerifyArgs),
}

fn main() {
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(config) => config,
            Err(violations) => {
                let error = CliError::Config(violations);
                eprintln!("error: {}", error.message());
                eprintln!("{}", error.record());
                std::process::exit(error.exit_code());
            }
        },
        None => RunConfig::default(),
    };

    let result = match cli.command {
        Command::Ingest(args) => commands::ingest::run(args, &config),
        Command::Folds(args) => commands::folds::run(args, &config),
        Command::Annotate(args) => commands::annotate::run(args, &config),
        Command::Kappa(args) => commands::kappa::run(args, &config),
        Command::Augment(args) => commands::augment::run(args, &config),
        Command::Stats(args) => commands::stats::run(args, &config),
        Command::Eval(args) => commands::evalcmd::run(args, &config),
        Command::Report(args) => commands::report::run(args, &config),
        Command::ReplayVerify(args) => commands::replay_verify::run(args, &config),
    };

    if let Err(error) = result {
        eprintln!("error: {}", error.message());
        eprintln!("{}", error.record());
        std::process::exit(error.exit_code());
    }
}
