//! Offline fixture synthesis for hermetic generation runs.
//!
//! Given an augmentation plan, this walks the same deterministic prompt
//! stream the pipeline will consume and writes a replay fixture whose
//! responses are fabricated, valid, distinct messages. The result lets
//! `replay` transport runs, demos, and tests execute a full generation
//! pipeline with no network and no recorded model output.

use std::io::Write;
use std::path::Path;

use crate::corpus::{Corpus, Label};
use crate::gateway::FixtureEntry;
use crate::pipeline::{AugmentationPlan, PipelineError, PromptFactory};
use crate::promptgen::{PromptBundle, PromptTemplateSet};

/// Fabricate a deterministic numbered response for a prompt bundle.
///
/// Every item is derived from the prompt id, so items are unique across
/// prompts and pass the default validation rules: smishing items carry a
/// URL and a phone number, all items sit inside the length bounds, and no
/// item contains bracketed placeholders.
pub fn synthesize_response(bundle: &PromptBundle) -> String {
    let tag: String = bundle.prompt_id.chars().take(8).collect();
    let digits: String = bundle
        .prompt_id
        .chars()
        .filter(|c| c.is_ascii_digit())
        .take(4)
        .collect();
    let digits = if digits.is_empty() { "5550".to_string() } else { digits };
    let mut out = String::new();
    for k in 0..bundle.m {
        let line = match bundle.label {
            Label::Spam => format!(
                "{}. Weekend offer {tag}-{k}: two for one at the outlet store all week, show \
                 this text at the till to redeem it.",
                k + 1
            ),
            _ => format!(
                "{}. Security notice {tag}-{k}: verify your account at \
                 http://check-{tag}-{k}.example or call 0800{digits}{k:02} within 24 hours.",
                k + 1
            ),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Write a replay fixture covering the plan's prompt stream.
///
/// For each quota bucket the stream is materialized up to the number of
/// requests a fully-valid response sequence consumes, plus `margin` spare
/// entries so speculative prefetch never outruns the fixture.
pub fn write_fixture_for_plan(
    plan: &AugmentationPlan,
    corpus: &Corpus,
    templates: &PromptTemplateSet,
    path: &Path,
    margin: usize,
) -> Result<usize, PipelineError> {
    let train = corpus.subset(&plan.fold.train_ids);
    let mut entries = Vec::new();
    for (bucket, quota) in plan.quota_map() {
        let pool: Vec<_> = train
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
        let consumed = quota.div_ceil(factory.samples_per_call).max(1);
        for request_index in 0..consumed + margin {
            let bundle = factory.bundle(request_index)?;
            entries.push(FixtureEntry {
                response: synthesize_response(&bundle),
                prompt_id: bundle.prompt_id,
            });
        }
    }

    let mut file = std::fs::File::create(path).map_err(|source| {
        PipelineError::Gateway(crate::gateway::GatewayError::FixtureIo {
            path: path.display().to_string(),
            source,
        })
    })?;
    for entry in &entries {
        writeln!(
            file,
            "{}",
            serde_json::to_string(entry).expect("entry serializes")
        )
        .map_err(|source| {
            PipelineError::Gateway(crate::gateway::GatewayError::FixtureIo {
                path: path.display().to_string(),
                source,
            })
        })?;
    }
    Ok(entries.len())
}

/// Write a fixture whose every response is a refusal, for exercising the
/// attempt-cap path without a network.
pub fn write_refusal_fixture(
    plan: &AugmentationPlan,
    corpus: &Corpus,
    templates: &PromptTemplateSet,
    path: &Path,
) -> Result<usize, PipelineError> {
    const REFUSAL: &str =
        "I'm just an AI, I cannot generate smishing messages that are designed to deceive or \
         harm individuals.";
    let train = corpus.subset(&plan.fold.train_ids);
    let mut entries = Vec::new();
    for (bucket, quota) in plan.quota_map() {
        let pool: Vec<_> = train
            .iter()
            .filter(|m| {
                m.label == bucket.label
                    && (bucket.principle.is_none() || m.principle == bucket.principle)
            })
            .cloned()
            .collect();
        if pool.is_empty() {
            continue;
        }
        let factory = PromptFactory::new(plan.run_seed, bucket, &pool, templates);
        let max_requests = plan.attempt_cap_multiplier.max(1)
            * quota.div_ceil(factory.samples_per_call).max(1);
        for request_index in 0..max_requests {
            let bundle = factory.bundle(request_index)?;
            entries.push(FixtureEntry {
                prompt_id: bundle.prompt_id,
                response: REFUSAL.to_string(),
            });
        }
    }
    let body: String = entries
        .iter()
        .map(|e| format!("{}\n", serde_json::to_string(e).expect("entry serializes")))
        .collect();
    std::fs::write(path, body).map_err(|source| {
        PipelineError::Gateway(crate::gateway::GatewayError::FixtureIo {
            path: path.display().to_string(),
            source,
        })
    })?;
    Ok(entries.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Message;
    use crate::promptgen::{build_prompt, DemoSample};
    use crate::validator::{validate_candidate, ValidationRules};

    #[test]
    fn synthesized_items_pass_default_validation() {
        let templates = PromptTemplateSet::embedded_default();
        for label in [Label::Smishing, Label::Spam] {
            let demos = DemoSample {
                demos: (0..5)
                    .map(|i| {
                        let mut m = Message::original(
                            format!("d{i}"),
                            format!("demo text {i} http://d{i}.example"),
                            label,
                        );
                        m.principle = None;
                        m
                    })
                    .collect(),
                with_replacement: false,
            };
            let bundle = build_prompt(label, None, &demos, 10, &templates).unwrap();
            let response = synthesize_response(&bundle);
            let items = crate::promptgen::parse_generation(&response, 10);
            assert_eq!(items.len(), 10);
            let rules = ValidationRules::default();
            for item in &items {
                let verdict = validate_candidate(item, label, &rules);
                assert!(verdict.accepted, "{item} rejected: {:?}", verdict.reason);
            }
            // All distinct after normalization.
            let unique: std::collections::HashSet<String> =
                items.iter().map(|i| crate::validator::normalize(i)).collect();
            assert_eq!(unique.len(), 10);
        }
    }
}
