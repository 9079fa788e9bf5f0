//! `augment`: grow one fold's training slice by a factor with a lexical or
//! generation method, persisting the corpus, manifest, and rejection log.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use smishkit_core::corpus::{make_folds, save_jsonl, Corpus, CorpusFormat};
use smishkit_core::eda::{EdaParams, SynonymLexicon, DEFAULT_ALPHA};
use smishkit_core::gateway::{Gateway, GatewayConfig, RetryPolicy, TransportMode};
use smishkit_core::hash::derive_seed;
use smishkit_core::pipeline::{
    run_eda_augmentation, run_llm_augmentation, AugmentationPlan, Method, RunOutcome, RunOutput,
};
use smishkit_core::promptgen::PromptTemplateSet;
use smishkit_core::validator::ValidationRules;

use super::{ensure_dir, load_corpus_file, parse_format, resolve_corpus_path, write_json, write_string};
use crate::config::RunConfig;
use crate::errors::{from_pipeline, CliError};

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<CorpusFormat>,
    /// Augmentation method; `--technique` is an alternative spelling for
    /// the lexical ones.
    #[arg(long, value_parser = parse_method, required_unless_present = "technique")]
    pub method: Option<Method>,
    /// Target size as a multiple of the train slice.
    #[arg(long)]
    pub factor: u32,
    /// Fold index to augment (0-based).
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    /// Number of folds in the split.
    #[arg(long)]
    pub k: Option<usize>,
    /// Master seed: drives the split and the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Perturbation strength for lexical methods.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Technique override for lexical methods (sr, ri, rs, rd); alternative
    /// to spelling the method out as eda-XX.
    #[arg(long)]
    pub technique: Option<String>,
    /// Synonym lexicon file (word<TAB>synonym,synonym).
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Stopword list file, one word per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Prompt template file.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Gateway transport.
    #[arg(long, value_parser = ["live", "record", "replay"])]
    pub transport: Option<String>,
    /// Fixture path for record/replay transports.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    /// Response prefetch worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Maximum requests per bucket as a multiple of quota/m.
    #[arg(long)]
    pub attempt_cap: Option<usize>,
    /// Build persuasion prompts for spam too (needs annotated spam).
    #[arg(long)]
    pub theory_on_spam: bool,
    /// Maximum in-flight requests.
    #[arg(long)]
    pub max_inflight: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn parse_method(value: &str) -> Result<Method, String> {
    Method::parse(value).ok_or_else(|| {
        format!("unknown method {value:?} (eda-sr, eda-ri, eda-rs, eda-rd, llm-theory, llm-plain)")
    })
}

pub fn run(args: AugmentArgs, config: &RunConfig) -> Result<(), CliError> {
    let corpus_path = resolve_corpus_path(args.corpus.clone(), config)?;
    let method = match &args.technique {
        Some(technique) => Method::parse(&format!("eda-{technique}")).ok_or_else(|| {
            CliError::Config(vec![format!("unknown technique {technique:?}")])
        })?,
        None => args.method.ok_or_else(|| {
            CliError::Config(vec!["one of --method or --technique is required".into()])
        })?,
    };
    let factor = args.factor;
    let allowed = config.allowed_factors();
    if !allowed.contains(&factor) {
        return Err(CliError::Config(vec![format!(
            "factor {factor} not in allowed set {allowed:?} (override with [augment] allowed_factors)"
        )]));
    }
    let k = args.k.or(config.folds_k).unwrap_or(5);
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let drop_ham = config.drop_ham.unwrap_or(true);

    let corpus = load_corpus_file(&corpus_path, args.format.or(config.corpus_format), drop_ham)?;
    let folds =
        make_folds(&corpus, k, seed).map_err(|e| CliError::Other(anyhow::Error::new(e)))?;
    let fold = folds
        .get(args.fold)
        .ok_or_else(|| {
            CliError::Config(vec![format!("fold {} out of range 0..{k}", args.fold)])
        })?
        .clone();
    let train = corpus.subset(&fold.train_ids);

    let run_seed = derive_seed(
        seed,
        &[
            "augment",
            method.as_str(),
            &factor.to_string(),
            &args.fold.to_string(),
        ],
    );
    let theory_on_spam = args.theory_on_spam || config.theory_on_spam.unwrap_or(false);
    let mut plan = AugmentationPlan::new(method, factor, fold, run_seed, &train, theory_on_spam)
        .map_err(from_pipeline)?;
    if let Some(cap) = args.attempt_cap.or(config.attempt_cap_multiplier) {
        plan.attempt_cap_multiplier = cap.max(1);
    }

    let run_id = format!("{}_f{}_fold{}_s{}", method.as_str(), factor, args.fold, seed);
    let run_dir = args.out.join("aug").join(&run_id);
    ensure_dir(&run_dir)?;

    let mut driver: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    driver.insert("corpus_path".into(), corpus_path.display().to_string().into());
    driver.insert("drop_ham".into(), drop_ham.into());
    driver.insert("k".into(), k.into());
    driver.insert("master_seed".into(), seed.into());
    driver.insert("fold_index".into(), args.fold.into());

    let mut output = if method.is_llm() {
        let templates_path = args.templates.clone().or_else(|| config.templates_path.clone());
        let templates = match &templates_path {
            Some(path) => PromptTemplateSet::from_file(path)
                .map_err(|e| CliError::Config(vec![e.to_string()]))?,
            None => PromptTemplateSet::embedded_default(),
        };
        if let Some(path) = &templates_path {
            driver.insert("templates_path".into(), path.display().to_string().into());
        }
        let rules = build_rules(config)?;
        driver.insert("min_chars".into(), rules.min_chars.into());
        driver.insert("max_chars".into(), rules.max_chars.into());
        driver.insert(
            "smishing_requires_artifact".into(),
            rules.smishing_requires_artifact.into(),
        );
        let workers = args.workers.or(config.workers).unwrap_or(2).max(1);
        driver.insert("workers".into(), workers.into());
        let gateway = build_gateway(&args, config)?;
        run_llm_augmentation(&plan, &corpus, &templates, &gateway, &rules, workers)
            .map_err(from_pipeline)?
    } else {
        let lexicon_path = args.lexicon.clone().or_else(|| config.lexicon_path.clone());
        let lexicon = match &lexicon_path {
            Some(path) => SynonymLexicon::from_file(path)
                .map_err(|e| CliError::Config(vec![e.to_string()]))?,
            None => SynonymLexicon::embedded_default(),
        };
        if let Some(path) = &lexicon_path {
            driver.insert("lexicon_path".into(), path.display().to_string().into());
        }
        let alpha = args.alpha.or(config.alpha).unwrap_or(DEFAULT_ALPHA);
        let mut params = EdaParams::new(alpha, 0)
            .map_err(|e| CliError::Config(vec![e.to_string()]))?;
        let stopwords_path = args.stopwords.clone().or_else(|| config.stopwords_path.clone());
        if let Some(path) = &stopwords_path {
            params = params
                .with_stopwords_file(path)
                .map_err(|e| CliError::Config(vec![e.to_string()]))?;
            driver.insert("stopwords_path".into(), path.display().to_string().into());
        }
        run_eda_augmentation(&plan, &corpus, &lexicon, &params).map_err(from_pipeline)?
    };

    output.manifest.driver = driver;
    persist_run(&run_dir, &output)?;

    match &output.manifest.outcome {
        RunOutcome::Success => {
            println!(
                "wrote {} messages ({} accepted) -> {}",
                output.corpus.len(),
                output.manifest.accepted,
                run_dir.join("augmented.jsonl").display()
            );
            Ok(())
        }
        RunOutcome::AttemptCapReached { bucket, .. } => Err(CliError::AttemptCap {
            bucket: bucket.clone(),
            run_dir: run_dir.display().to_string(),
        }),
    }
}

fn build_rules(config: &RunConfig) -> Result<ValidationRules, CliError> {
    let to_config_error = |e: smishkit_core::validator::ValidatorError| {
        CliError::Config(vec![e.to_string()])
    };
    let mut rules = ValidationRules::new(
        config.min_chars.unwrap_or(10),
        config.max_chars.unwrap_or(500),
        config.smishing_requires_artifact.unwrap_or(true),
    )
    .map_err(to_config_error)?;
    if let Some(patterns) = &config.placeholder_patterns {
        rules = rules.with_placeholder_patterns(patterns).map_err(to_config_error)?;
    }
    if let Some(pattern) = &config.url_pattern {
        rules = rules.with_url_pattern(pattern).map_err(to_config_error)?;
    }
    if let Some(pattern) = &config.phone_pattern {
        rules = rules.with_phone_pattern(pattern).map_err(to_config_error)?;
    }
    Ok(rules)
}

fn build_gateway(args: &AugmentArgs, config: &RunConfig) -> Result<Gateway, CliError> {
    let mut gateway_config = GatewayConfig::from_env();
    if let Some(endpoint) = &config.endpoint {
        gateway_config.endpoint = Some(endpoint.clone());
    }
    if let Some(key) = &config.api_key {
        gateway_config.api_key = Some(key.clone());
    }
    if let Some(model) = &config.model {
        gateway_config.model = model.clone();
    }
    if let Some(t) = config.temperature {
        gateway_config.temperature = t;
    }
    gateway_config.max_tokens = config.max_tokens.or(gateway_config.max_tokens);
    gateway_config.system_prompt = config.system_prompt.clone();
    if let Some(retries) = config.max_retries {
        gateway_config.retry = RetryPolicy {
            max_retries: retries,
            ..RetryPolicy::default()
        };
    }
    if let Some(inflight) = args.max_inflight.or(config.max_inflight) {
        gateway_config.max_inflight = inflight;
    }
    gateway_config.requests_per_minute = config.requests_per_minute;

    let transport = match args.transport.as_deref().unwrap_or("live") {
        "replay" => TransportMode::Replay {
            fixture: require_fixture(args)?,
        },
        "record" => TransportMode::Record {
            fixture: require_fixture(args)?,
        },
        _ => TransportMode::Live,
    };
    Gateway::new(gateway_config, transport).map_err(|e| CliError::Gateway(e.to_string()))
}

fn require_fixture(args: &AugmentArgs) -> Result<PathBuf, CliError> {
    args.fixture
        .clone()
        .ok_or_else(|| CliError::Config(vec!["record/replay transport needs --fixture".into()]))
}

/// Write augmented.jsonl, manifest.json, and rejections.jsonl into the run
/// directory. Called on success and on attempt-cap aborts alike.
pub fn persist_run(run_dir: &Path, output: &RunOutput) -> Result<(), CliError> {
    save_jsonl(&output.corpus, &run_dir.join("augmented.jsonl"))
        .map_err(|e| CliError::Other(anyhow::Error::new(e)))?;
    write_json(&run_dir.join("manifest.json"), &output.manifest)?;
    let mut rejections = String::new();
    for rejection in &output.rejections {
        rejections.push_str(&serde_json::to_string(rejection).expect("rejection serializes"));
        rejections.push('\n');
    }
    write_string(&run_dir.join("rejections.jsonl"), &rejections)?;
    Ok(())
}

/// Shared corpus re-loader for verify: honors the driver block of a
/// manifest.
pub fn reload_driver_corpus(manifest: &smishkit_core::pipeline::RunManifest) -> Result<Corpus, CliError> {
    let corpus_path = manifest
        .driver
        .get("corpus_path")
        .and_then(|v| v.as_str())
        .ok_or_else(|| {
            CliError::Config(vec!["manifest has no driver.corpus_path; cannot re-run".into()])
        })?;
    let drop_ham = manifest
        .driver
        .get("drop_ham")
        .and_then(|v| v.as_bool())
        .unwrap_or(true);
    let path = PathBuf::from(corpus_path);
    if !path.exists() {
        return Err(CliError::Config(vec![format!(
            "corpus path from manifest does not exist: {corpus_path}"
        )]));
    }
    load_corpus_file(&path, None, drop_ham)
}
