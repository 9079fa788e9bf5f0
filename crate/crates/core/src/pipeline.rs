//! Augmentation run orchestration.
//!
//! A run takes one fold's training slice and grows it to factor x its size,
//! either by lexical transforms (one message yields factor-1 variants) or by
//! few-shot generation (per-bucket quotas filled through the gateway with
//! validation and dedup). Runs are deterministic given (plan, inputs): all
//! randomness derives from the run seed, buckets are processed in key order,
//! and generation requests are consumed strictly in request order no matter
//! how many worker threads prefetch responses.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, FoldPlan, Label, Message, MessageId, Source};
use crate::eda::{self, EdaParams, SynonymLexicon, Technique};
use crate::gateway::{Gateway, GatewayError};
use crate::hash::{derive_seed, rng_from_seed, sha256_hex};
use crate::promptgen::{
    build_prompt, parse_generation, sample_demos, PromptBundle, PromptError, PromptTemplateSet,
    DEFAULT_DEMO_COUNT, DEFAULT_SAMPLES_PER_CALL,
};
use crate::taxonomy::PersuasionPrinciple;
use crate::validator::{validate_candidate, Deduper, Reason, ValidationRules};

/// Attempt budget: a bucket may consume at most this many requests per
/// ceil(quota/m) before the run aborts.
pub const DEFAULT_ATTEMPT_CAP_MULTIPLIER: usize = 20;

/// Augmentation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "eda-sr")]
    EdaSr,
    #[serde(rename = "eda-ri")]
    EdaRi,
    #[serde(rename = "eda-rs")]
    EdaRs,
    #[serde(rename = "eda-rd")]
    EdaRd,
    #[serde(rename = "llm-theory")]
    LlmTheory,
    #[serde(rename = "llm-plain")]
    LlmPlain,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::EdaSr,
        Method::EdaRi,
        Method::EdaRs,
        Method::EdaRd,
        Method::LlmTheory,
        Method::LlmPlain,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::EdaSr => "eda-sr",
            Method::EdaRi => "eda-ri",
            Method::EdaRs => "eda-rs",
            Method::EdaRd => "eda-rd",
            Method::LlmTheory => "llm-theory",
            Method::LlmPlain => "llm-plain",
        }
    }

    pub fn parse(value: &str) -> Option<Self> {
        match value.trim().to_lowercase().as_str() {
            "eda-sr" => Some(Method::EdaSr),
            "eda-ri" => Some(Method::EdaRi),
            "eda-rs" => Some(Method::EdaRs),
            "eda-rd" => Some(Method::EdaRd),
            "llm-theory" => Some(Method::LlmTheory),
            "llm-plain" => Some(Method::LlmPlain),
            _ => None,
        }
    }

    pub fn technique(&self) -> Option<Technique> {
        match self {
            Method::EdaSr => Some(Technique::SynonymReplacement),
            Method::EdaRi => Some(Technique::RandomInsertion),
            Method::EdaRs => Some(Technique::RandomSwap),
            Method::EdaRd => Some(Technique::RandomDeletion),
            _ => None,
        }
    }

    pub fn source(&self) -> Source {
        match self {
            Method::EdaSr => Source::EdaSr,
            Method::EdaRi => Source::EdaRi,
            Method::EdaRs => Source::EdaRs,
            Method::EdaRd => Source::EdaRd,
            Method::LlmTheory => Source::LlmTheory,
            Method::LlmPlain => Source::LlmPlain,
        }
    }

    pub fn is_llm(&self) -> bool {
        matches!(self, Method::LlmTheory | Method::LlmPlain)
    }
}

/// Quota bucket: a label, optionally narrowed to one persuasion principle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BucketKey {
    pub label: Label,
    pub principle: Option<PersuasionPrinciple>,
}

impl BucketKey {
    pub fn new(label: Label, principle: Option<PersuasionPrinciple>) -> Self {
        BucketKey { label, principle }
    }

    pub fn id(&self) -> String {
        match self.principle {
            Some(p) => format!("{}/{}", self.label.as_str(), p.code()),
            None => self.label.as_str().to_string(),
        }
    }
}

impl std::fmt::Display for BucketKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.id())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("factor must be at least 2, got {0}")]
    BadFactor(u32),
    #[error("train slice contains ham message {id}")]
    HamInTrain { id: MessageId },
    #[error("method {method} requires annotated {label} messages but none are resolved")]
    NoAnnotatedMessages { method: String, label: String },
    #[error("method mismatch: {expected} operation got plan for {found}")]
    MethodMismatch { expected: String, found: String },
    #[error("bucket {bucket} has no demonstration pool in the train slice")]
    EmptyBucketPool { bucket: String },
    #[error("quota total {got} does not match the (factor-1) x train budget {expected}")]
    QuotaInvariant { expected: usize, got: usize },
    #[error("fold train ids missing from corpus: {missing} of {expected}")]
    FoldCorpusMismatch { missing: usize, expected: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Split `total` across `weights` proportionally with largest-remainder
/// rounding, so the parts always sum to `total` exactly.
pub fn largest_remainder(weights: &[usize], total: usize) -> Vec<usize> {
    let weight_sum: usize = weights.iter().sum();
    if weight_sum == 0 || weights.is_empty() {
        return vec![0; weights.len()];
    }
    let mut parts: Vec<usize> = weights
        .iter()
        .map(|&w| total * w / weight_sum)
        .collect();
    let assigned: usize = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // Integer remainders of total*w/W, largest first; ties by index.
    order.sort_by_key(|&i| (std::cmp::Reverse(total * weights[i] % weight_sum), i));
    for &i in order.iter().take(total - assigned) {
        parts[i] += 1;
    }
    parts
}

/// Compute per-bucket generation quotas for a train slice.
///
/// The new-instance budget (factor-1) x |train| is split across labels
/// proportionally to label counts; under the theory method the smishing
/// share is further split across principles proportionally to the
/// annotated distribution.
pub fn plan_quotas(
    train: &[Message],
    factor: u32,
    method: Method,
    theory_on_spam: bool,
) -> Result<BTreeMap<BucketKey, usize>, PipelineError> {
    if factor < 2 {
        return Err(PipelineError::BadFactor(factor));
    }
    if let Some(ham) = train.iter().find(|m| m.label == Label::Ham) {
        return Err(PipelineError::HamInTrain {
            id: ham.id.clone(),
        });
    }
    let budget = (factor as usize - 1) * train.len();
    let labels = [Label::Smishing, Label::Spam];
    let label_counts: Vec<usize> = labels
        .iter()
        .map(|&l| train.iter().filter(|m| m.label == l).count())
        .collect();
    let label_budgets = largest_remainder(&label_counts, budget);

    let mut quotas = BTreeMap::new();
    for (&label, &label_budget) in labels.iter().zip(&label_budgets) {
        if label_budget == 0 && label_counts[labels.iter().position(|&l| l == label).unwrap()] == 0
        {
            continue;
        }
        let theoretical = method == Method::LlmTheory
            && (label == Label::Smishing || (label == Label::Spam && theory_on_spam));
        if theoretical {
            let principle_counts: Vec<usize> = PersuasionPrinciple::ALL
                .iter()
                .map(|&p| {
                    train
                        .iter()
                        .filter(|m| m.label == label && m.principle == Some(p))
                        .count()
                })
                .collect();
            if principle_counts.iter().sum::<usize>() == 0 {
                return Err(PipelineError::NoAnnotatedMessages {
                    method: method.as_str().to_string(),
                    label: label.as_str().to_string(),
                });
            }
            let shares = largest_remainder(&principle_counts, label_budget);
            for (&principle, &share) in PersuasionPrinciple::ALL.iter().zip(&shares) {
                if principle_counts[principle.index()] > 0 {
                    quotas.insert(BucketKey::new(label, Some(principle)), share);
                }
            }
        } else {
            quotas.insert(BucketKey::new(label, None), label_budget);
        }
    }

    let total: usize = quotas.values().sum();
    if total != budget {
        return Err(PipelineError::QuotaInvariant {
            expected: budget,
            got: total,
        });
    }
    Ok(quotas)
}

/// A fully resolved augmentation run description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub method: Method,
    pub factor: u32,
    pub fold: FoldPlan,
    pub run_seed: u64,
    pub quotas: Vec<QuotaEntry>,
    pub attempt_cap_multiplier: usize,
    #[serde(default)]
    pub theory_on_spam: bool,
}

/// Serializable quota line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuotaEntry {
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principle: Option<PersuasionPrinciple>,
    pub quota: usize,
}

impl AugmentationPlan {
    pub fn new(
        method: Method,
        factor: u32,
        fold: FoldPlan,
        run_seed: u64,
        train: &[Message],
        theory_on_spam: bool,
    ) -> Result<Self, PipelineError> {
        if train.len() != fold.train_ids.len() {
            return Err(PipelineError::FoldCorpusMismatch {
                missing: fold.train_ids.len().saturating_sub(train.len()),
                expected: fold.train_ids.len(),
            });
        }
        let quotas = plan_quotas(train, factor, method, theory_on_spam)?
            .into_iter()
            .map(|(key, quota)| QuotaEntry {
                label: key.label,
                principle: key.principle,
                quota,
            })
            .collect();
        Ok(AugmentationPlan {
            method,
            factor,
            fold,
            run_seed,
            quotas,
            attempt_cap_multiplier: DEFAULT_ATTEMPT_CAP_MULTIPLIER,
            theory_on_spam,
        })
    }

    pub fn quota_map(&self) -> BTreeMap<BucketKey, usize> {
        self.quotas
            .iter()
            .map(|entry| (BucketKey::new(entry.label, entry.principle), entry.quota))
            .collect()
    }

    pub fn budget(&self) -> usize {
        self.quotas.iter().map(|entry| entry.quota).sum()
    }
}

/// Whether the run finished, and if not, where it stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunOutcome {
    Success,
    AttemptCapReached {
        bucket: String,
        requests: usize,
        accepted: usize,
    },
}

/// One generation call's provenance line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt_id: String,
    pub bucket: String,
    pub request_index: usize,
}

/// One rejected candidate: the hash of its text and the failing rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectionRecord {
    pub text_hash: String,
    pub reason: Reason,
    pub bucket: String,
}

/// Everything needed to audit or re-run one augmentation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub plan: AugmentationPlan,
    pub train_size: usize,
    pub output_size: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<String, usize>,
    /// Lexical variants that still collided after the retry budget and were
    /// emitted anyway (lexical runs only).
    pub duplicates_accepted: usize,
    pub outcome: RunOutcome,
    pub wall_clock_ms: u128,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    /// Driver-set metadata (input paths, fold parameters) that makes a
    /// manifest self-sufficient for re-runs.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub driver: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub prompts: Vec<PromptRecord>,
}

/// An augmentation run's artifacts.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub corpus: Corpus,
    pub manifest: RunManifest,
    pub rejections: Vec<RejectionRecord>,
}

fn train_slice(corpus: &Corpus, fold: &FoldPlan) -> Result<Vec<Message>, PipelineError> {
    let train = corpus.subset(&fold.train_ids);
    if train.len() != fold.train_ids.len() {
        return Err(PipelineError::FoldCorpusMismatch {
            missing: fold.train_ids.len() - train.len(),
            expected: fold.train_ids.len(),
        });
    }
    Ok(train)
}

/// Grow the plan's training slice with lexical variants: every original
/// yields exactly (factor - 1) variants under the plan's technique.
///
/// Variant seeds derive from (run_seed, message id, technique, variant), so
/// the output is identical however the work is scheduled. A variant whose
/// normalized text collides with anything already emitted is retried under
/// fresh derived seeds; if the retry budget runs out (for instance, a text
/// the technique cannot change) it is emitted anyway and counted.
pub fn run_eda_augmentation(
    plan: &AugmentationPlan,
    corpus: &Corpus,
    lexicon: &SynonymLexicon,
    params: &EdaParams,
) -> Result<RunOutput, PipelineError> {
    let technique = plan
        .method
        .technique()
        .ok_or_else(|| PipelineError::MethodMismatch {
            expected: "a lexical method".to_string(),
            found: plan.method.as_str().to_string(),
        })?;
    let started = Instant::now();
    let train = train_slice(corpus, &plan.fold)?;
    let mut deduper = Deduper::with_existing(train.iter().map(|m| m.text.as_str()));

    let mut messages = train.clone();
    let mut duplicates_accepted = 0usize;
    let mut rejected: BTreeMap<String, usize> = BTreeMap::new();
    for original in &train {
        for variant_index in 1..plan.factor as usize {
            let mut text = String::new();
            let mut fresh = false;
            for attempt in 0..plan.attempt_cap_multiplier.max(1) {
                let seed = derive_seed(
                    plan.run_seed,
                    &[
                        "eda",
                        technique.as_str(),
                        original.id.as_str(),
                        &variant_index.to_string(),
                        &attempt.to_string(),
                    ],
                );
                text = eda::apply(technique, &original.text, lexicon, &params.with_seed(seed));
                if !deduper.contains(&text) {
                    fresh = true;
                    break;
                }
                *rejected.entry("duplicate_retry".to_string()).or_insert(0) += 1;
            }
            if !fresh {
                duplicates_accepted += 1;
            }
            deduper.admit(&text);
            messages.push(Message {
                id: MessageId::new(format!(
                    "{}-{}-{}",
                    original.id.as_str(),
                    technique.as_str(),
                    variant_index
                )),
                text,
                label: original.label,
                source: plan.method.source(),
                principle: original.principle,
                parent_id: Some(original.id.clone()),
                prompt_id: None,
            });
        }
    }

    let corpus_out = Corpus::new(messages)?;
    let accepted = corpus_out.len() - train.len();
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        plan: plan.clone(),
        train_size: train.len(),
        output_size: corpus_out.len(),
        accepted,
        rejected,
        duplicates_accepted,
        outcome: RunOutcome::Success,
        wall_clock_ms: started.elapsed().as_millis(),
        alpha: Some(params.alpha),
        template_hash: None,
        rules_hash: None,
        model: None,
        transport: None,
        fixture: None,
        driver: BTreeMap::new(),
        prompts: Vec::new(),
    };
    Ok(RunOutput {
        corpus: corpus_out,
        manifest,
        rejections: Vec::new(),
    })
}

/// Deterministic prompt stream for one bucket: request r's demonstrations
/// are drawn with an rng derived from (run_seed, bucket, r), independent of
/// responses, worker counts, and scheduling.
pub struct PromptFactory<'a> {
    pub run_seed: u64,
    pub bucket: BucketKey,
    pub pool: &'a [Message],
    pub templates: &'a PromptTemplateSet,
    pub samples_per_call: usize,
    pub demo_count: usize,
}

impl<'a> PromptFactory<'a> {
    pub fn new(
        run_seed: u64,
        bucket: BucketKey,
        pool: &'a [Message],
        templates: &'a PromptTemplateSet,
    ) -> Self {
        PromptFactory {
            run_seed,
            bucket,
            pool,
            templates,
            samples_per_call: DEFAULT_SAMPLES_PER_CALL,
            demo_count: DEFAULT_DEMO_COUNT,
        }
    }

    pub fn bundle(&self, request_index: usize) -> Result<PromptBundle, PromptError> {
        let seed = derive_seed(
            self.run_seed,
            &["demo", &self.bucket.id(), &request_index.to_string()],
        );
        let mut rng = rng_from_seed(seed);
        let demos = sample_demos(self.pool, self.bucket.principle, self.demo_count, &mut rng)?;
        build_prompt(
            self.bucket.label,
            self.bucket.principle,
            &demos,
            self.samples_per_call,
            self.templates,
        )
    }
}

struct BucketResult {
    accepts: Vec<Message>,
    prompts: Vec<PromptRecord>,
    rejections: Vec<RejectionRecord>,
    rejected_histogram: BTreeMap<String, usize>,
    requests_consumed: usize,
    capped: bool,
}

/// Per-run context shared by every bucket.
struct RunContext<'a> {
    gateway: &'a Gateway,
    rules: &'a ValidationRules,
    source: Source,
    workers: usize,
}

/// Fill one bucket's quota. Responses are prefetched by `workers` threads
/// but consumed strictly in request order, so the accept list is the same
/// for any worker count.
fn run_bucket(
    factory: &PromptFactory<'_>,
    quota: usize,
    max_requests: usize,
    context: &RunContext<'_>,
    deduper: &mut Deduper,
) -> Result<BucketResult, PipelineError> {
    let RunContext {
        gateway,
        rules,
        source,
        workers,
    } = *context;
    let workers = workers.max(1);
    let bucket_id = factory.bucket.id();
    let mut result = BucketResult {
        accepts: Vec::with_capacity(quota),
        prompts: Vec::new(),
        rejections: Vec::new(),
        rejected_histogram: BTreeMap::new(),
        requests_consumed: 0,
        capped: false,
    };
    if quota == 0 {
        return Ok(result);
    }

    let next_index = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (sender, receiver) = mpsc::channel::<(usize, Result<(PromptBundle, String), PipelineError>)>();

    std::thread::scope(|scope| -> Result<(), PipelineError> {
        for _ in 0..workers {
            let sender = sender.clone();
            let next_index = &next_index;
            let stop = &stop;
            scope.spawn(move || loop {
                if stop.load(Ordering::Relaxed) {
                    return;
                }
                let index = next_index.fetch_add(1, Ordering::Relaxed);
                if index >= max_requests || stop.load(Ordering::Relaxed) {
                    return;
                }
                let outcome = factory
                    .bundle(index)
                    .map_err(PipelineError::from)
                    .and_then(|bundle| {
                        let request = gateway.make_request(&bundle.rendered, &bundle.prompt_id);
                        let response = gateway.complete(&request)?;
                        Ok((bundle, response))
                    });
                if sender.send((index, outcome)).is_err() {
                    return;
                }
            });
        }
        drop(sender);

        let mut buffered: BTreeMap<usize, Result<(PromptBundle, String), PipelineError>> =
            BTreeMap::new();
        let mut cursor = 0usize;
        'consume: while cursor < max_requests {
            let entry = match buffered.remove(&cursor) {
                Some(entry) => entry,
                None => match receiver.recv() {
                    Ok((index, entry)) => {
                        if index != cursor {
                            buffered.insert(index, entry);
                            continue;
                        }
                        entry
                    }
                    Err(_) => break,
                },
            };
            let (bundle, response) = match entry {
                Ok(pair) => pair,
                Err(err) => {
                    stop.store(true, Ordering::Relaxed);
                    return Err(err);
                }
            };
            result.requests_consumed += 1;
            result.prompts.push(PromptRecord {
                prompt_id: bundle.prompt_id.clone(),
                bucket: bucket_id.clone(),
                request_index: cursor,
            });
            for candidate in parse_generation(&response, factory.samples_per_call) {
                let verdict = validate_candidate(&candidate, factory.bucket.label, rules);
                let reason = if !verdict.accepted {
                    Some(verdict.reason)
                } else if !deduper.admit(&candidate) {
                    Some(Reason::Duplicate)
                } else {
                    None
                };
                if let Some(reason) = reason {
                    *result
                        .rejected_histogram
                        .entry(format!("{reason:?}").to_lowercase())
                        .or_insert(0) += 1;
                    result.rejections.push(RejectionRecord {
                        text_hash: sha256_hex(&candidate),
                        reason,
                        bucket: bucket_id.clone(),
                    });
                    continue;
                }
                let item_index = result.accepts.len();
                result.accepts.push(Message {
                    id: MessageId::new(format!(
                        "g-{}-{}",
                        &bundle.prompt_id[..12.min(bundle.prompt_id.len())],
                        item_index
                    )),
                    text: candidate,
                    label: factory.bucket.label,
                    source,
                    principle: factory.bucket.principle,
                    parent_id: None,
                    prompt_id: Some(bundle.prompt_id.clone()),
                });
                if result.accepts.len() == quota {
                    stop.store(true, Ordering::Relaxed);
                    break 'consume;
                }
            }
            cursor += 1;
        }
        stop.store(true, Ordering::Relaxed);
        Ok(())
    })?;

    if result.accepts.len() < quota {
        result.capped = true;
    }
    Ok(result)
}

/// Grow the plan's training slice with generated messages.
///
/// Buckets run in key order against a shared dedup set; inside a bucket the
/// loop samples 5 demonstrations, renders a prompt asking for 10 samples,
/// completes it through the gateway, then validates and dedups candidates
/// until the bucket quota is met. A bucket that exhausts its request budget
/// aborts the run with partial output and an attempt-cap outcome.
pub fn run_llm_augmentation(
    plan: &AugmentationPlan,
    corpus: &Corpus,
    templates: &PromptTemplateSet,
    gateway: &Gateway,
    rules: &ValidationRules,
    workers: usize,
) -> Result<RunOutput, PipelineError> {
    if !plan.method.is_llm() {
        return Err(PipelineError::MethodMismatch {
            expected: "a generation method".to_string(),
            found: plan.method.as_str().to_string(),
        });
    }
    let started = Instant::now();
    let train = train_slice(corpus, &plan.fold)?;
    let mut deduper = Deduper::with_existing(train.iter().map(|m| m.text.as_str()));

    let mut messages = train.clone();
    let mut prompts = Vec::new();
    let mut rejections = Vec::new();
    let mut rejected: BTreeMap<String, usize> = BTreeMap::new();
    let mut outcome = RunOutcome::Success;

    for (bucket, quota) in plan.quota_map() {
        let pool: Vec<Message> = train
            .iter()
            .filter(|m| {
                m.label == bucket.label
                    && (bucket.principle.is_none() || m.principle == bucket.principle)
            })
            .cloned()
            .collect();
        if pool.is_empty() {
            return Err(PipelineError::EmptyBucketPool {
                bucket: bucket.id(),
            });
        }
        let factory = PromptFactory::new(plan.run_seed, bucket, &pool, templates);
        let per_call = factory.samples_per_call;
        let max_requests =
            plan.attempt_cap_multiplier.max(1) * quota.div_ceil(per_call).max(1);
        let context = RunContext {
            gateway,
            rules,
            source: plan.method.source(),
            workers,
        };
        let bucket_result = run_bucket(&factory, quota, max_requests, &context, &mut deduper)?;
        for (reason, count) in &bucket_result.rejected_histogram {
            *rejected.entry(reason.clone()).or_insert(0) += count;
        }
        prompts.extend(bucket_result.prompts);
        rejections.extend(bucket_result.rejections);
        messages.extend(bucket_result.accepts.iter().cloned());
        if bucket_result.capped {
            outcome = RunOutcome::AttemptCapReached {
                bucket: bucket.id(),
                requests: bucket_result.requests_consumed,
                accepted: bucket_result.accepts.len(),
            };
            break;
        }
    }

    let corpus_out = Corpus::new(messages)?;
    let accepted = corpus_out.len() - train.len();
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        plan: plan.clone(),
        train_size: train.len(),
        output_size: corpus_out.len(),
        accepted,
        rejected,
        duplicates_accepted: 0,
        outcome,
        wall_clock_ms: started.elapsed().as_millis(),
        alpha: None,
        template_hash: Some(templates.config_hash()),
        rules_hash: Some(rules.config_hash()),
        model: Some(gateway.model().to_string()),
        transport: Some(gateway.transport().as_str().to_string()),
        fixture: gateway
            .transport()
            .fixture()
            .map(|p| p.display().to_string()),
        driver: BTreeMap::new(),
        prompts,
    };
    Ok(RunOutput {
        corpus: corpus_out,
        manifest,
        rejections,
    })
}
