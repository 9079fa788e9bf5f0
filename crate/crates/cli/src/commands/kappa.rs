//! `kappa`: inter-annotator agreement over an annotation record file.

use std::path::PathBuf;

use clap::Args;
use smishkit_core::taxonomy::{fleiss_kappa, load_annotation_records, PRINCIPLE_COUNT};

use crate::config::RunConfig;
use crate::errors::CliError;

#[derive(Debug, Args)]
pub struct KappaArgs {
    /// Annotation record file (CSV or JSONL).
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Number of categories.
    #[arg(long, default_value_t = PRINCIPLE_COUNT)]
    pub categories: usize,
}

pub fn run(args: KappaArgs, config: &RunConfig) -> Result<(), CliError> {
    let records_path = args
        .records
        .or_else(|| config.annotation_records.clone())
        .ok_or_else(|| CliError::Config(vec!["no annotation records given (--records)".into()]))?;
    if !records_path.exists() {
        return Err(CliError::Config(vec![format!(
            "annotation records do not exist: {}",
            records_path.display()
        )]));
    }
    let records = load_annotation_records(&records_path)
        .map_err(|e| CliError::Other(anyhow::Error::new(e)))?;
    let kappa = fleiss_kappa(&records, args.categories)
        .map_err(|e| CliError::Other(anyhow::Error::new(e)))?;
    println!("{kappa:.3}");
    Ok(())
}
