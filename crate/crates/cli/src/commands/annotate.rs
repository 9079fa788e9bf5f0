//! `annotate`: aggregate annotator votes and stamp resolved principles onto
//! the corpus. Unresolved messages go to a sidecar, never silently away.

use std::path::PathBuf;

use clap::Args;
use smishkit_core::corpus::{save_jsonl, CorpusFormat};
use smishkit_core::taxonomy::{
    apply_overrides, load_annotation_records, load_overrides, majority_vote,
    DEFAULT_MAJORITY_THRESHOLD,
};

use super::{ensure_dir, load_corpus_file, parse_format, resolve_corpus_path, write_json, write_string};
use crate::config::RunConfig;
use crate::errors::CliError;

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<CorpusFormat>,
    /// Annotation record file (CSV or JSONL).
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Manual-consensus override file (CSV: message_id,principle).
    #[arg(long)]
    pub overrides: Option<PathBuf>,
    /// Votes needed for a decision.
    #[arg(long, default_value_t = DEFAULT_MAJORITY_THRESHOLD)]
    pub threshold: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

pub fn run(args: AnnotateArgs, config: &RunConfig) -> Result<(), CliError> {
    let corpus_path = resolve_corpus_path(args.corpus, config)?;
    let records_path = args
        .records
        .clone()
        .or_else(|| config.annotation_records.clone())
        .ok_or_else(|| CliError::Config(vec!["no annotation records given (--records)".into()]))?;
    if !records_path.exists() {
        return Err(CliError::Config(vec![format!(
            "annotation records do not exist: {}",
            records_path.display()
        )]));
    }
    let overrides_path = args.overrides.clone().or_else(|| config.annotation_overrides.clone());

    let mut corpus = load_corpus_file(
        &corpus_path,
        args.format.or(config.corpus_format),
        config.drop_ham.unwrap_or(true),
    )?;
    let records = load_annotation_records(&records_path)
        .map_err(|e| CliError::Other(anyhow::Error::new(e)))?;
    let mut results = majority_vote(&records, args.threshold)
        .map_err(|e| CliError::Other(anyhow::Error::new(e)))?;
    let mut overridden = 0;
    if let Some(path) = &overrides_path {
        let overrides =
            load_overrides(path).map_err(|e| CliError::Other(anyhow::Error::new(e)))?;
        overridden = apply_overrides(&mut results, &overrides);
    }
    let stamped = corpus.apply_principles(&results);

    let dir = args.out.join("annotate");
    ensure_dir(&dir)?;
    let mut aggregation = String::new();
    let mut unresolved = String::new();
    for result in &results {
        let line = serde_json::to_string(result).expect("result serializes");
        aggregation.push_str(&line);
        aggregation.push('\n');
        if result.decided.is_none() {
            unresolved.push_str(&line);
            unresolved.push('\n');
        }
    }
    write_string(&dir.join("aggregation.jsonl"), &aggregation)?;
    write_string(&dir.join("unresolved.jsonl"), &unresolved)?;
    save_jsonl(&corpus, &dir.join("annotated.jsonl"))
        .map_err(|e| CliError::Other(anyhow::Error::new(e)))?;

    let resolved = results.iter().filter(|r| r.decided.is_some()).count();
    let manifest = serde_json::json!({
        "command": "annotate",
        "version": env!("CARGO_PKG_VERSION"),
        "corpus_path": corpus_path.display().to_string(),
        "records_path": records_path.display().to_string(),
        "overrides_path": overrides_path.as_ref().map(|p| p.display().to_string()),
        "threshold": args.threshold,
        "messages_voted": results.len(),
        "resolved": resolved,
        "unresolved": results.len() - resolved,
        "overridden": overridden,
        "stamped": stamped,
    });
    write_json(&dir.join("manifest.json"), &manifest)?;

    println!(
        "resolved {} of {} messages ({} unresolved, {} overridden); stamped {} corpus rows -> {}",
        resolved,
        results.len(),
        results.len() - resolved,
        overridden,
        stamped,
        dir.display()
    );
    Ok(())
}
