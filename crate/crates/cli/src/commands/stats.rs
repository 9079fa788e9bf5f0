//! `stats`: character- and word-count summaries shaped like the
//! descriptive-analysis tables.

use std::path::PathBuf;

use clap::Args;
use smishkit_core::analytics::{describe, render_csv, render_text, StatsRow};
use smishkit_core::corpus::CorpusFormat;

use super::{ensure_dir, load_corpus_file, parse_format, write_json, write_string};
use crate::config::RunConfig;
use crate::errors::CliError;

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Corpus files to summarize, one table row each.
    #[arg(required = true)]
    pub corpora: Vec<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<CorpusFormat>,
    #[arg(long)]
    pub keep_ham: bool,
    /// Trim texts before counting.
    #[arg(long)]
    pub trim: bool,
    /// Print CSV instead of the text table.
    #[arg(long)]
    pub csv: bool,
    /// Also write stats.txt, stats.csv, and a manifest under this root.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: StatsArgs, config: &RunConfig) -> Result<(), CliError> {
    let drop_ham = if args.keep_ham {
        false
    } else {
        config.drop_ham.unwrap_or(true)
    };
    let mut rows = Vec::new();
    for path in &args.corpora {
        if !path.exists() {
            return Err(CliError::Config(vec![format!(
                "corpus path does not exist: {}",
                path.display()
            )]));
        }
        let corpus = load_corpus_file(path, args.format, drop_ham)?;
        let texts: Vec<String> = corpus
            .messages
            .iter()
            .map(|m| {
                if args.trim {
                    m.text.trim().to_string()
                } else {
                    m.text.clone()
                }
            })
            .collect();
        let (chars, words) =
            describe(&texts).map_err(|e| CliError::Other(anyhow::Error::new(e)))?;
        let dataset = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        rows.push(StatsRow {
            dataset,
            chars,
            words,
        });
    }

    let text = render_text(&rows);
    let csv = render_csv(&rows);
    print!("{}", if args.csv { &csv } else { &text });

    if let Some(out) = &args.out {
        let dir = out.join("stats");
        ensure_dir(&dir)?;
        write_string(&dir.join("stats.txt"), &text)?;
        write_string(&dir.join("stats.csv"), &csv)?;
        let manifest = serde_json::json!({
            "command": "stats",
            "version": env!("CARGO_PKG_VERSION"),
            "corpora": args.corpora.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "drop_ham": drop_ham,
            "trim": args.trim,
            "rows": rows,
        });
        write_json(&dir.join("manifest.json"), &manifest)?;
    }
    Ok(())
}
