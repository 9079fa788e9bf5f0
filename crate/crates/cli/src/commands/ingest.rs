//! `ingest`: load, validate, and normalize a corpus to JSONL.

use std::path::PathBuf;

use clap::Args;
use smishkit_core::corpus::{save_jsonl, CorpusFormat, Label};

use super::{ensure_dir, load_corpus_file, parse_format, resolve_corpus_path, write_json};
use crate::config::RunConfig;
use crate::errors::CliError;

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Input corpus file (CSV or JSONL).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_parser = parse_format)]
    pub format: Option<CorpusFormat>,
    /// Keep ham rows instead of dropping them.
    #[arg(long)]
    pub keep_ham: bool,
    /// Output root directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

pub fn run(args: IngestArgs, config: &RunConfig) -> Result<(), CliError> {
    let corpus_path = resolve_corpus_path(args.corpus, config)?;
    let drop_ham = if args.keep_ham {
        false
    } else {
        config.drop_ham.unwrap_or(true)
    };
    let format = args.format.or(config.corpus_format);
    let corpus = load_corpus_file(&corpus_path, format, drop_ham)?;

    let dir = args.out.join("ingest");
    ensure_dir(&dir)?;
    let output = dir.join("corpus.jsonl");
    save_jsonl(&corpus, &output).map_err(|e| CliError::Other(anyhow::Error::new(e)))?;

    let manifest = serde_json::json!({
        "command": "ingest",
        "version": env!("CARGO_PKG_VERSION"),
        "corpus_path": corpus_path.display().to_string(),
        "drop_ham": drop_ham,
        "messages": corpus.len(),
        "smishing": corpus.label_count(Label::Smishing),
        "spam": corpus.label_count(Label::Spam),
        "ham": corpus.label_count(Label::Ham),
        "output": output.display().to_string(),
    });
    write_json(&dir.join("manifest.json"), &manifest)?;

    println!(
        "ingested {} messages ({} smishing, {} spam, {} ham) -> {}",
        corpus.len(),
        corpus.label_count(Label::Smishing),
        corpus.label_count(Label::Spam),
        corpus.label_count(Label::Ham),
        output.display()
    );
    Ok(())
}
