//! `replay-verify`: re-run an augmentation from its manifest and diff the
//! regenerated corpus against the recorded artifact, byte for byte.

use std::path::PathBuf;

use clap::Args;
use smishkit_core::corpus::to_jsonl_string;
use smishkit_core::eda::{EdaParams, SynonymLexicon, DEFAULT_ALPHA};
use smishkit_core::gateway::{Gateway, GatewayConfig, TransportMode};
use smishkit_core::pipeline::{run_eda_augmentation, run_llm_augmentation, RunManifest};
use smishkit_core::promptgen::PromptTemplateSet;
use smishkit_core::validator::ValidationRules;

use super::augment::reload_driver_corpus;
use crate::config::RunConfig;
use crate::errors::{from_pipeline, CliError};

#[derive(Debug, Args)]
pub struct ReplayVerifyArgs {
    /// Augmentation run directory holding manifest.json and augmented.jsonl.
    #[arg(long)]
    pub run: PathBuf,
}

pub fn run(args: ReplayVerifyArgs, _config: &RunConfig) -> Result<(), CliError> {
    let manifest_path = args.run.join("manifest.json");
    let body = std::fs::read_to_string(&manifest_path).map_err(|e| {
        CliError::Config(vec![format!(
            "cannot read {}: {e}",
            manifest_path.display()
        )])
    })?;
    let manifest: RunManifest = serde_json::from_str(&body)
        .map_err(|e| CliError::Other(anyhow::anyhow!("run manifest: {e}")))?;
    let corpus = reload_driver_corpus(&manifest)?;
    let plan = manifest.plan.clone();

    let regenerated = if plan.method.is_llm() {
        let fixture = manifest.fixture.clone().ok_or_else(|| {
            CliError::Config(vec![
                "manifest records no fixture; only replayable runs can be verified".into(),
            ])
        })?;
        let templates = match manifest.driver.get("templates_path").and_then(|v| v.as_str()) {
            Some(path) => PromptTemplateSet::from_file(std::path::Path::new(path))
                .map_err(|e| CliError::Config(vec![e.to_string()]))?,
            None => PromptTemplateSet::embedded_default(),
        };
        let rules = ValidationRules::new(
            manifest
                .driver
                .get("min_chars")
                .and_then(|v| v.as_u64())
                .unwrap_or(10) as usize,
            manifest
                .driver
                .get("max_chars")
                .and_then(|v| v.as_u64())
                .unwrap_or(500) as usize,
            manifest
                .driver
                .get("smishing_requires_artifact")
                .and_then(|v| v.as_bool())
                .unwrap_or(true),
        )
        .map_err(|e| CliError::Config(vec![e.to_string()]))?;
        if let Some(recorded) = &manifest.rules_hash {
            if *recorded != rules.config_hash() {
                return Err(CliError::VerifyMismatch(format!(
                    "validation rules hash changed: manifest {recorded}, rebuilt {}",
                    rules.config_hash()
                )));
            }
        }
        if let Some(recorded) = &manifest.template_hash {
            if *recorded != templates.config_hash() {
                return Err(CliError::VerifyMismatch(format!(
                    "template hash changed: manifest {recorded}, rebuilt {}",
                    templates.config_hash()
                )));
            }
        }
        let gateway = Gateway::new(
            GatewayConfig {
                model: manifest.model.clone().unwrap_or_else(|| "replay".into()),
                ..GatewayConfig::default()
            },
            TransportMode::Replay {
                fixture: PathBuf::from(fixture),
            },
        )
        .map_err(|e| CliError::Gateway(e.to_string()))?;
        let workers = manifest
            .driver
            .get("workers")
            .and_then(|v| v.as_u64())
            .unwrap_or(1) as usize;
        run_llm_augmentation(&plan, &corpus, &templates, &gateway, &rules, workers)
            .map_err(from_pipeline)?
    } else {
        let lexicon = match manifest.driver.get("lexicon_path").and_then(|v| v.as_str()) {
            Some(path) => SynonymLexicon::from_file(std::path::Path::new(path))
                .map_err(|e| CliError::Config(vec![e.to_string()]))?,
            None => SynonymLexicon::embedded_default(),
        };
        let mut params = EdaParams::new(manifest.alpha.unwrap_or(DEFAULT_ALPHA), 0)
            .map_err(|e| CliError::Config(vec![e.to_string()]))?;
        if let Some(path) = manifest.driver.get("stopwords_path").and_then(|v| v.as_str()) {
            params = params
                .with_stopwords_file(std::path::Path::new(path))
                .map_err(|e| CliError::Config(vec![e.to_string()]))?;
        }
        run_eda_augmentation(&plan, &corpus, &lexicon, &params).map_err(from_pipeline)?
    };

    let recorded_path = args.run.join("augmented.jsonl");
    let recorded = std::fs::read_to_string(&recorded_path).map_err(|e| {
        CliError::Config(vec![format!("cannot read {}: {e}", recorded_path.display())])
    })?;
    let regenerated_bytes = to_jsonl_string(&regenerated.corpus);

    if recorded == regenerated_bytes {
        println!(
            "replay-verify: OK ({} messages, byte-identical)",
            regenerated.corpus.len()
        );
        Ok(())
    } else {
        let line = recorded
            .lines()
            .zip(regenerated_bytes.lines())
            .position(|(a, b)| a != b)
            .map(|i| i + 1)
            .unwrap_or_else(|| recorded.lines().count().min(regenerated_bytes.lines().count()) + 1);
        Err(CliError::VerifyMismatch(format!(
            "regenerated corpus differs from {} starting at line {line}",
            recorded_path.display()
        )))
    }
}
