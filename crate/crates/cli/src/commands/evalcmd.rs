//! `eval`: train the desk-scale classifier on one dataset and score it on a
//! held-out test file.

use std::path::PathBuf;

use clap::Args;
use smishkit_core::corpus::CorpusFormat;
use smishkit_core::evalkit::{evaluate, train, TrainHyper};

use super::{ensure_dir, load_corpus_file, parse_format, write_json};
use crate::config::RunConfig;
use crate::errors::CliError;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Training corpus file.
    #[arg(long)]
    pub train: PathBuf,
    /// Held-out test corpus file.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<CorpusFormat>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: EvalArgs, config: &RunConfig) -> Result<(), CliError> {
    for path in [&args.train, &args.test] {
        if !path.exists() {
            return Err(CliError::Config(vec![format!(
                "path does not exist: {}",
                path.display()
            )]));
        }
    }
    let train_corpus = load_corpus_file(&args.train, args.format, true)?;
    let hyper = TrainHyper {
        seed: args.seed.or(config.seed).unwrap_or(0),
        ..TrainHyper::default()
    };
    let model =
        train(&train_corpus.messages, &hyper).map_err(|e| CliError::Other(anyhow::Error::new(e)))?;

    // Test texts are only read here, after training finished.
    let test_corpus = load_corpus_file(&args.test, args.format, true)?;
    let metrics = evaluate(&model, &test_corpus.messages)
        .map_err(|e| CliError::Other(anyhow::Error::new(e)))?;

    println!(
        "P={:.4} R={:.4} Acc={:.4} F1={:.4}{}",
        metrics.precision,
        metrics.recall,
        metrics.accuracy,
        metrics.f1,
        if metrics.zero_division {
            " (zero-division flagged)"
        } else {
            ""
        }
    );

    if let Some(out) = &args.out {
        let dir = out.join("eval");
        ensure_dir(&dir)?;
        let manifest = serde_json::json!({
            "command": "eval",
            "version": env!("CARGO_PKG_VERSION"),
            "train": args.train.display().to_string(),
            "test": args.test.display().to_string(),
            "seed": hyper.seed,
            "lambda": model.lambda,
            "metrics": metrics,
        });
        write_json(&dir.join("metrics.json"), &manifest)?;
    }
    Ok(())
}
