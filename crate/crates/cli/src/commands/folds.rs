//! `folds`: stratified k-fold plans plus per-fold train/test files.

use std::path::PathBuf;

use clap::Args;
use smishkit_core::corpus::{make_folds, save_jsonl, Corpus, CorpusFormat};

use super::{ensure_dir, load_corpus_file, parse_format, resolve_corpus_path, write_json};
use crate::config::RunConfig;
use crate::errors::CliError;

#[derive(Debug, Args)]
pub struct FoldsArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<CorpusFormat>,
    /// Number of folds.
    #[arg(long)]
    pub k: Option<usize>,
    /// Master seed for the split.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub keep_ham: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

pub fn run(args: FoldsArgs, config: &RunConfig) -> Result<(), CliError> {
    let corpus_path = resolve_corpus_path(args.corpus, config)?;
    let drop_ham = if args.keep_ham {
        false
    } else {
        config.drop_ham.unwrap_or(true)
    };
    let corpus = load_corpus_file(&corpus_path, args.format.or(config.corpus_format), drop_ham)?;
    let k = args.k.or(config.folds_k).unwrap_or(5);
    let seed = args.seed.or(config.seed).unwrap_or(0);

    let folds =
        make_folds(&corpus, k, seed).map_err(|e| CliError::Other(anyhow::Error::new(e)))?;

    let dir = args.out.join("folds");
    ensure_dir(&dir)?;
    write_json(&dir.join("folds.json"), &folds)?;
    let mut train_sizes = Vec::new();
    let mut test_sizes = Vec::new();
    for fold in &folds {
        let fold_dir = dir.join(format!("fold{}", fold.repeat_index));
        ensure_dir(&fold_dir)?;
        let train = Corpus {
            messages: corpus.subset(&fold.train_ids),
        };
        let test = Corpus {
            messages: corpus.subset(&fold.test_ids),
        };
        save_jsonl(&train, &fold_dir.join("train.jsonl"))
            .map_err(|e| CliError::Other(anyhow::Error::new(e)))?;
        save_jsonl(&test, &fold_dir.join("test.jsonl"))
            .map_err(|e| CliError::Other(anyhow::Error::new(e)))?;
        train_sizes.push(train.len());
        test_sizes.push(test.len());
    }

    let manifest = serde_json::json!({
        "command": "folds",
        "version": env!("CARGO_PKG_VERSION"),
        "corpus_path": corpus_path.display().to_string(),
        "drop_ham": drop_ham,
        "k": k,
        "seed": seed,
        "train_sizes": train_sizes,
        "test_sizes": test_sizes,
    });
    write_json(&dir.join("manifest.json"), &manifest)?;

    println!(
        "wrote {} folds (train sizes {:?}) -> {}",
        k,
        train_sizes,
        dir.display()
    );
    Ok(())
}
