//! Subcommand implementations and shared artifact helpers.

pub mod annotate;
pub mod augment;
pub mod evalcmd;
pub mod folds;
pub mod ingest;
pub mod kappa;
pub mod replay_verify;
pub mod report;
pub mod stats;

use std::path::{Path, PathBuf};

use anyhow::Context;
use smishkit_core::corpus::{load_corpus, Corpus, CorpusFormat};

use crate::errors::CliError;

/// Create a directory tree, mapping failures to runtime errors.
pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(CliError::from)
}

pub fn write_string(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::from)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let body = serde_json::to_string_pretty(value)
        .context("serializing artifact")
        .map_err(CliError::from)?;
    write_string(path, &format!("{body}\n"))
}

/// Resolve a corpus path (flag wins over config) and check existence.
pub fn resolve_corpus_path(
    flag: Option<PathBuf>,
    config: &crate::config::RunConfig,
) -> Result<PathBuf, CliError> {
    let path = flag
        .or_else(|| config.corpus_path.clone())
        .ok_or_else(|| CliError::Config(vec!["no corpus path given (--corpus)".to_string()]))?;
    if !path.exists() {
        return Err(CliError::Config(vec![format!(
            "corpus path does not exist: {}",
            path.display()
        )]));
    }
    Ok(path)
}

/// Load a corpus with format inferred from the extension unless overridden.
pub fn load_corpus_file(
    path: &Path,
    format: Option<CorpusFormat>,
    drop_ham: bool,
) -> Result<Corpus, CliError> {
    let format = format.unwrap_or_else(|| CorpusFormat::from_path(path));
    load_corpus(path, format, drop_ham).map_err(|e| CliError::Other(anyhow::Error::new(e)))
}

pub fn parse_format(value: &str) -> Result<CorpusFormat, String> {
    CorpusFormat::parse(value).ok_or_else(|| format!("unknown format {value:?} (csv or jsonl)"))
}
