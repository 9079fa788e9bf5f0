//! `report`: train and score every augmentation run against its fold's test
//! set, add original-baseline rows, and render the comparison table.

use std::path::{Path, PathBuf};

use clap::Args;
use smishkit_core::evalkit::{aggregate, evaluate, train, EvalRow, TrainHyper, BASELINE_METHOD};
use smishkit_core::pipeline::RunManifest;

use super::{ensure_dir, load_corpus_file, write_json, write_string};
use crate::config::RunConfig;
use crate::errors::CliError;

const MODEL_CONFIG: &str = "tfidf-logreg";

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Folds directory produced by the `folds` subcommand.
    #[arg(long)]
    pub folds: PathBuf,
    /// Augmentation run directories (repeatable).
    #[arg(long = "run", required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn fold_count(folds_dir: &Path) -> Result<usize, CliError> {
    let manifest_path = folds_dir.join("manifest.json");
    let body = std::fs::read_to_string(&manifest_path).map_err(|e| {
        CliError::Config(vec![format!(
            "cannot read folds manifest {}: {e}",
            manifest_path.display()
        )])
    })?;
    let manifest: serde_json::Value = serde_json::from_str(&body)
        .map_err(|e| CliError::Other(anyhow::anyhow!("folds manifest: {e}")))?;
    manifest["k"]
        .as_u64()
        .map(|k| k as usize)
        .ok_or_else(|| CliError::Config(vec!["folds manifest has no k".into()]))
}

fn eval_pair(
    train_path: &Path,
    test_path: &Path,
    hyper: &TrainHyper,
) -> Result<smishkit_core::evalkit::Metrics, CliError> {
    let train_corpus = load_corpus_file(train_path, None, true)?;
    let model =
        train(&train_corpus.messages, hyper).map_err(|e| CliError::Other(anyhow::Error::new(e)))?;
    let test_corpus = load_corpus_file(test_path, None, true)?;
    evaluate(&model, &test_corpus.messages).map_err(|e| CliError::Other(anyhow::Error::new(e)))
}

pub fn run(args: ReportArgs, config: &RunConfig) -> Result<(), CliError> {
    let k = fold_count(&args.folds)?;
    let hyper = TrainHyper {
        seed: args.seed.or(config.seed).unwrap_or(0),
        ..TrainHyper::default()
    };

    let mut rows: Vec<EvalRow> = Vec::new();
    let mut baseline_folds = std::collections::BTreeSet::new();
    for run_dir in &args.runs {
        let manifest_path = run_dir.join("manifest.json");
        let body = std::fs::read_to_string(&manifest_path).map_err(|e| {
            CliError::Config(vec![format!(
                "cannot read run manifest {}: {e}",
                manifest_path.display()
            )])
        })?;
        let manifest: RunManifest = serde_json::from_str(&body)
            .map_err(|e| CliError::Other(anyhow::anyhow!("run manifest: {e}")))?;
        let fold = manifest.plan.fold.repeat_index;
        let test_path = args.folds.join(format!("fold{fold}")).join("test.jsonl");
        let metrics = eval_pair(&run_dir.join("augmented.jsonl"), &test_path, &hyper)?;
        rows.push(EvalRow {
            method: manifest.plan.method.as_str().to_string(),
            factor: manifest.plan.factor,
            model_config: MODEL_CONFIG.to_string(),
            fold,
            metrics,
        });
        baseline_folds.insert(fold);
    }

    // Original baseline: the fold's untouched train split.
    for &fold in &baseline_folds {
        let fold_dir = args.folds.join(format!("fold{fold}"));
        let metrics = eval_pair(&fold_dir.join("train.jsonl"), &fold_dir.join("test.jsonl"), &hyper)?;
        rows.push(EvalRow {
            method: BASELINE_METHOD.to_string(),
            factor: 1,
            model_config: MODEL_CONFIG.to_string(),
            fold,
            metrics,
        });
    }

    let expected = baseline_folds.len().min(k).max(1);
    let report =
        aggregate(&rows, expected).map_err(|e| CliError::Other(anyhow::Error::new(e)))?;
    let text = report.render_text();
    print!("{text}");

    if let Some(out) = &args.out {
        let dir = out.join("report");
        ensure_dir(&dir)?;
        write_string(&dir.join("report.txt"), &text)?;
        write_string(&dir.join("report.csv"), &report.render_csv())?;
        let manifest = serde_json::json!({
            "command": "report",
            "version": env!("CARGO_PKG_VERSION"),
            "folds_dir": args.folds.display().to_string(),
            "runs": args.runs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "folds_aggregated": expected,
            "seed": hyper.seed,
            "report": report,
        });
        write_json(&dir.join("manifest.json"), &manifest)?;
    }
    Ok(())
}
