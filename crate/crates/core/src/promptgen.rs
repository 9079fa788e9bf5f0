//! Few-shot prompt assembly and model-output parsing.
//!
//! A prompt is: role section, optional persuasion section, n demonstration
//! messages, then an output instruction asking for m samples as a numbered
//! list. Sections are joined by a configurable separator (default: a blank
//! line). The rendered text is hashed into a stable prompt id that keys
//! record/replay fixtures and generation provenance.

use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;
use thiserror::Error;

use crate::corpus::{Label, Message};
use crate::hash::sha256_hex;
use crate::kvconf::KvConfig;
use crate::taxonomy::PersuasionPrinciple;

static DEFAULT_TEMPLATES: &str = include_str!("assets/templates.conf");

/// Demonstrations per prompt.
pub const DEFAULT_DEMO_COUNT: usize = 5;

/// Samples requested per generation call.
pub const DEFAULT_SAMPLES_PER_CALL: usize = 10;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template section {section} is missing or empty")]
    MissingTemplate { section: String },
    #[error("template file: {0}")]
    Config(#[from] crate::kvconf::KvError),
    #[error("demo pool is empty{}", principle.map(|p| format!(" for principle {p}")).unwrap_or_default())]
    EmptyPool {
        principle: Option<PersuasionPrinciple>,
    },
    #[error("demo pool contains a message without principle {expected} (id {id})")]
    PoolPrincipleMismatch {
        expected: PersuasionPrinciple,
        id: crate::corpus::MessageId,
    },
    #[error("demo {id} has label {found:?} but the prompt is for {expected:?}")]
    DemoLabelMismatch {
        id: crate::corpus::MessageId,
        expected: Label,
        found: Label,
    },
}

/// The template text for every prompt section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplateSet {
    pub role_smishing: String,
    pub role_spam: String,
    pub persuasion_block: BTreeMap<PersuasionPrinciple, String>,
    /// Full join string inserted between sections; defaults to a blank line.
    pub separator: String,
    pub output_instruction: String,
}

impl PromptTemplateSet {
    /// The built-in templates.
    pub fn embedded_default() -> Self {
        Self::from_config(&KvConfig::parse(DEFAULT_TEMPLATES).expect("embedded templates parse"))
            .expect("embedded templates are complete")
    }

    pub fn from_file(path: &Path) -> Result<Self, PromptError> {
        Self::from_config(&KvConfig::from_file(path)?)
    }

    pub fn from_config(config: &KvConfig) -> Result<Self, PromptError> {
        let body = |section: &str| {
            config
                .raw_body(section)
                .filter(|b| !b.trim().is_empty())
                .ok_or_else(|| PromptError::MissingTemplate {
                    section: section.to_string(),
                })
        };
        let mut persuasion_block = BTreeMap::new();
        for principle in PersuasionPrinciple::ALL {
            let section = principle.code().to_lowercase();
            persuasion_block.insert(principle, body(&section)?);
        }
        let separator = match config.raw_body("separator") {
            Some(body) if !body.trim().is_empty() => format!("\n{body}\n"),
            _ => "\n\n".to_string(),
        };
        Ok(PromptTemplateSet {
            role_smishing: body("role_smishing")?,
            role_spam: body("role_spam")?,
            persuasion_block,
            separator,
            output_instruction: body("output_instruction")?,
        })
    }

    pub fn role_for(&self, label: Label) -> &str {
        match label {
            Label::Spam => &self.role_spam,
            _ => &self.role_smishing,
        }
    }

    /// Stable hash of the whole template set, recorded in run manifests.
    pub fn config_hash(&self) -> String {
        let mut canonical = String::new();
        canonical.push_str(&self.role_smishing);
        canonical.push('\u{1}');
        canonical.push_str(&self.role_spam);
        for (principle, body) in &self.persuasion_block {
            canonical.push('\u{1}');
            canonical.push_str(principle.code());
            canonical.push('\u{2}');
            canonical.push_str(body);
        }
        canonical.push('\u{1}');
        canonical.push_str(&self.separator);
        canonical.push('\u{1}');
        canonical.push_str(&self.output_instruction);
        sha256_hex(&canonical)
    }
}

/// Demonstrations drawn for one generation call.
#[derive(Debug, Clone)]
pub struct DemoSample {
    pub demos: Vec<Message>,
    /// Set when the pool was smaller than the requested count and draws
    /// were taken with replacement.
    pub with_replacement: bool,
}

/// Draw n demonstrations uniformly without replacement; fall back to
/// with-replacement draws (flagged) when the pool is too small.
///
/// When `principle` is given the pool must already be filtered to it.
pub fn sample_demos<R: Rng>(
    pool: &[Message],
    principle: Option<PersuasionPrinciple>,
    n: usize,
    rng: &mut R,
) -> Result<DemoSample, PromptError> {
    if pool.is_empty() {
        return Err(PromptError::EmptyPool { principle });
    }
    if let Some(expected) = principle {
        if let Some(bad) = pool.iter().find(|m| m.principle != Some(expected)) {
            return Err(PromptError::PoolPrincipleMismatch {
                expected,
                id: bad.id.clone(),
            });
        }
    }
    if pool.len() >= n {
        let mut indices: Vec<usize> = (0..pool.len()).collect();
        indices.shuffle(rng);
        indices.truncate(n);
        Ok(DemoSample {
            demos: indices.into_iter().map(|i| pool[i].clone()).collect(),
            with_replacement: false,
        })
    } else {
        let demos = (0..n)
            .map(|_| pool[rng.random_range(0..pool.len())].clone())
            .collect();
        Ok(DemoSample {
            demos,
            with_replacement: true,
        })
    }
}

/// A fully rendered generation prompt plus its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptBundle {
    pub label: Label,
    pub principle: Option<PersuasionPrinciple>,
    pub role_text: String,
    pub persuasion_text: Option<String>,
    pub demos: Vec<Message>,
    pub m: usize,
    pub rendered: String,
    /// SHA-256 of the rendered prompt.
    pub prompt_id: String,
    pub sampled_with_replacement: bool,
}

/// Render a prompt bundle from a demo sample.
///
/// With `principle = None` the persuasion section is omitted entirely,
/// which is the without-theory configuration.
pub fn build_prompt(
    label: Label,
    principle: Option<PersuasionPrinciple>,
    demos: &DemoSample,
    m: usize,
    templates: &PromptTemplateSet,
) -> Result<PromptBundle, PromptError> {
    for demo in &demos.demos {
        if demo.label != label {
            return Err(PromptError::DemoLabelMismatch {
                id: demo.id.clone(),
                expected: label,
                found: demo.label,
            });
        }
        if let Some(expected) = principle {
            if demo.principle != Some(expected) {
                return Err(PromptError::PoolPrincipleMismatch {
                    expected,
                    id: demo.id.clone(),
                });
            }
        }
    }

    let role_text = templates.role_for(label).to_string();
    let persuasion_text = principle.map(|p| {
        templates.persuasion_block[&p]
            .replace("{name}", p.name())
            .replace("{definition}", p.definition())
    });
    let instruction = templates.output_instruction.replace("{m}", &m.to_string());

    let mut sections: Vec<&str> = vec![&role_text];
    if let Some(block) = persuasion_text.as_deref() {
        sections.push(block);
    }
    for demo in &demos.demos {
        sections.push(&demo.text);
    }
    sections.push(&instruction);
    let rendered = sections.join(&templates.separator);
    let prompt_id = sha256_hex(&rendered);

    Ok(PromptBundle {
        label,
        principle,
        role_text,
        persuasion_text,
        demos: demos.demos.clone(),
        m,
        rendered,
        prompt_id,
        sampled_with_replacement: demos.with_replacement,
    })
}

static NUMBERED_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*\d{1,4}[.)]\s*(.*)$").expect("numbering pattern compiles"));

const REFUSAL_MARKERS: [&str; 10] = [
    "i'm just an ai",
    "i am just an ai",
    "i cannot",
    "i can't",
    "i am unable",
    "i'm unable",
    "as an ai",
    "i'm sorry",
    "i apologize",
    "i won't",
];

fn strip_quotes(text: &str) -> &str {
    let trimmed = text.trim();
    let pairs = [('"', '"'), ('\'', '\''), ('\u{201c}', '\u{201d}'), ('\u{2018}', '\u{2019}')];
    for (open, close) in pairs {
        if trimmed.len() >= 2 && trimmed.starts_with(open) && trimmed.ends_with(close) {
            return trimmed[open.len_utf8()..trimmed.len() - close.len_utf8()].trim();
        }
    }
    trimmed
}

/// Extract up to m candidate messages from a raw model response.
///
/// Primary parse takes lines numbered `k.` or `k)`, with numbering and
/// surrounding quotes stripped. When no numbered lines exist, refusal text
/// yields an empty list and anything else falls back to blank-line-separated
/// blocks. Never errors and never returns an empty or whitespace item.
pub fn parse_generation(raw: &str, m: usize) -> Vec<String> {
    let mut items = Vec::new();
    for line in raw.lines() {
        if let Some(captures) = NUMBERED_LINE.captures(line) {
            let item = strip_quotes(captures.get(1).map_or("", |c| c.as_str()));
            if !item.is_empty() {
                items.push(item.to_string());
                if items.len() == m {
                    return items;
                }
            }
        }
    }
    if !items.is_empty() {
        return items;
    }

    let lowered = raw.trim().to_lowercase();
    if REFUSAL_MARKERS.iter().any(|marker| lowered.contains(marker)) {
        return Vec::new();
    }

    // Fallback: blank-line-separated blocks, each joined to a single line.
    let mut blocks = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in raw.lines().chain(std::iter::once("")) {
        if line.trim().is_empty() {
            if !current.is_empty() {
                let block = strip_quotes(&current.join(" ")).to_string();
                if !block.is_empty() {
                    blocks.push(block);
                    if blocks.len() == m {
                        return blocks;
                    }
                }
                current.clear();
            }
        } else {
            current.push(line.trim());
        }
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{bundled_synthetic, Source};
    use crate::hash::rng_from_seed;

    fn smishing_pool(principle: PersuasionPrinciple) -> Vec<Message> {
        bundled_synthetic()
            .messages
            .into_iter()
            .filter(|m| m.label == Label::Smishing && m.principle == Some(principle))
            .collect()
    }

    #[test]
    fn sample_demos_distinct_from_large_pool() {
        let pool = smishing_pool(PersuasionPrinciple::Authority);
        assert!(pool.len() >= 5);
        let mut rng = rng_from_seed(1);
        let sample = sample_demos(&pool, Some(PersuasionPrinciple::Authority), 5, &mut rng).unwrap();
        assert_eq!(sample.demos.len(), 5);
        assert!(!sample.with_replacement);
        let ids: std::collections::HashSet<_> = sample.demos.iter().map(|m| &m.id).collect();
        assert_eq!(ids.len(), 5);
    }

    #[test]
    fn sample_demos_pool_of_exactly_n_returns_all() {
        let pool = smishing_pool(PersuasionPrinciple::SocialProof);
        assert_eq!(pool.len(), 5);
        let mut rng = rng_from_seed(2);
        let sample = sample_demos(&pool, Some(PersuasionPrinciple::SocialProof), 5, &mut rng).unwrap();
        let mut got: Vec<&str> = sample.demos.iter().map(|m| m.id.as_str()).collect();
        let mut want: Vec<&str> = pool.iter().map(|m| m.id.as_str()).collect();
        got.sort_unstable();
        want.sort_unstable();
        assert_eq!(got, want);
    }

    #[test]
    fn sample_demos_small_pool_draws_with_replacement() {
        let pool: Vec<Message> = smishing_pool(PersuasionPrinciple::Authority)
            .into_iter()
            .take(3)
            .collect();
        // Some seed must produce a duplicate draw; check a few.
        let mut saw_duplicate = false;
        for seed in 0..20 {
            let mut rng = rng_from_seed(seed);
            let sample =
                sample_demos(&pool, Some(PersuasionPrinciple::Authority), 5, &mut rng).unwrap();
            assert_eq!(sample.demos.len(), 5);
            assert!(sample.with_replacement);
            let ids: std::collections::HashSet<_> = sample.demos.iter().map(|m| &m.id).collect();
            if ids.len() < 5 {
                saw_duplicate = true;
            }
        }
        assert!(saw_duplicate, "with-replacement draws never repeated");
    }

    #[test]
    fn sample_demos_empty_pool_errors() {
        let mut rng = rng_from_seed(3);
        assert!(matches!(
            sample_demos(&[], Some(PersuasionPrinciple::Distraction), 5, &mut rng),
            Err(PromptError::EmptyPool { .. })
        ));
    }

    #[test]
    fn sample_demos_rejects_unfiltered_pool() {
        let pool = smishing_pool(PersuasionPrinciple::Authority);
        let mut rng = rng_from_seed(4);
        assert!(matches!(
            sample_demos(&pool, Some(PersuasionPrinciple::Distraction), 5, &mut rng),
            Err(PromptError::PoolPrincipleMismatch { .. })
        ));
    }

    fn demo_sample(label: Label, principle: Option<PersuasionPrinciple>) -> DemoSample {
        let pool: Vec<Message> = bundled_synthetic()
            .messages
            .into_iter()
            .filter(|m| m.label == label && (principle.is_none() || m.principle == principle))
            .collect();
        let mut rng = rng_from_seed(7);
        sample_demos(&pool, principle, 5, &mut rng).unwrap()
    }

    #[test]
    fn theory_prompt_has_ordered_sections() {
        let templates = PromptTemplateSet::embedded_default();
        let principle = PersuasionPrinciple::Authority;
        let demos = demo_sample(Label::Smishing, Some(principle));
        let bundle =
            build_prompt(Label::Smishing, Some(principle), &demos, 10, &templates).unwrap();

        let rendered = &bundle.rendered;
        let role_at = rendered.find(&templates.role_smishing).unwrap();
        let block_at = rendered.find(principle.definition()).unwrap();
        assert!(role_at < block_at);
        let mut last = block_at;
        for demo in &bundle.demos {
            let at = rendered[last..].find(&demo.text).map(|i| last + i).unwrap();
            assert!(at > last);
            last = at;
        }
        let instruction_at = rendered.find("numbered list").unwrap();
        assert!(instruction_at > last);
        assert!(rendered.contains("10"));
        assert_eq!(bundle.prompt_id, sha256_hex(rendered));
    }

    #[test]
    fn plain_prompt_has_no_persuasion_section() {
        let templates = PromptTemplateSet::embedded_default();
        let demos = demo_sample(Label::Spam, None);
        let bundle = build_prompt(Label::Spam, None, &demos, 10, &templates).unwrap();
        assert!(bundle.persuasion_text.is_none());
        assert!(!bundle.rendered.contains("persuasion principle"));
        for principle in PersuasionPrinciple::ALL {
            assert!(!bundle.rendered.contains(principle.definition()));
        }
    }

    #[test]
    fn build_prompt_is_deterministic() {
        let templates = PromptTemplateSet::embedded_default();
        let demos = demo_sample(Label::Smishing, Some(PersuasionPrinciple::Distraction));
        let a = build_prompt(
            Label::Smishing,
            Some(PersuasionPrinciple::Distraction),
            &demos,
            10,
            &templates,
        )
        .unwrap();
        let b = build_prompt(
            Label::Smishing,
            Some(PersuasionPrinciple::Distraction),
            &demos,
            10,
            &templates,
        )
        .unwrap();
        assert_eq!(a.prompt_id, b.prompt_id);
        assert_eq!(a.rendered, b.rendered);
    }

    #[test]
    fn build_prompt_rejects_label_mismatch() {
        let templates = PromptTemplateSet::embedded_default();
        let demos = demo_sample(Label::Spam, None);
        assert!(matches!(
            build_prompt(Label::Smishing, None, &demos, 10, &templates),
            Err(PromptError::DemoLabelMismatch { .. })
        ));
    }

    #[test]
    fn build_prompt_rejects_principle_mismatch() {
        let templates = PromptTemplateSet::embedded_default();
        let mut demos = demo_sample(Label::Smishing, Some(PersuasionPrinciple::Authority));
        demos.demos[0].principle = Some(PersuasionPrinciple::Distraction);
        assert!(matches!(
            build_prompt(
                Label::Smishing,
                Some(PersuasionPrinciple::Authority),
                &demos,
                10,
                &templates
            ),
            Err(PromptError::PoolPrincipleMismatch { .. })
        ));
    }

    #[test]
    fn demo_principle_homogeneity_fuzz() {
        // 1,000 bundles across principles: every demo in a theory bundle
        // carries the bundle's principle.
        let templates = PromptTemplateSet::embedded_default();
        let corpus = bundled_synthetic();
        let mut built = 0;
        for seed in 0..1000u64 {
            let principle = PersuasionPrinciple::ALL[(seed % 5) as usize];
            let pool: Vec<Message> = corpus
                .messages
                .iter()
                .filter(|m| m.label == Label::Smishing && m.principle == Some(principle))
                .cloned()
                .collect();
            let mut rng = rng_from_seed(seed);
            let demos = sample_demos(&pool, Some(principle), 5, &mut rng).unwrap();
            let bundle =
                build_prompt(Label::Smishing, Some(principle), &demos, 10, &templates).unwrap();
            assert!(bundle
                .demos
                .iter()
                .all(|d| d.principle == Some(principle)));
            built += 1;
        }
        assert_eq!(built, 1000);
    }

    #[test]
    fn parse_simple_numbered_list() {
        assert_eq!(
            parse_generation("1. msg A\n2. msg B", 10),
            vec!["msg A".to_string(), "msg B".to_string()]
        );
    }

    #[test]
    fn parse_parenthesis_numbering_and_quotes() {
        assert_eq!(
            parse_generation("1) \"msg A\"\n\n2) \"msg B\"", 10),
            vec!["msg A".to_string(), "msg B".to_string()]
        );
    }

    #[test]
    fn parse_refusal_returns_empty() {
        let refusal = "I'm just an AI, I cannot generate smishing messages that are designed to \
                       deceive or harm individuals.";
        assert!(parse_generation(refusal, 10).is_empty());
        assert!(parse_generation("I'm sorry, but I can't help with that.", 10).is_empty());
    }

    #[test]
    fn parse_caps_at_m_and_preserves_order() {
        let raw = (1..=15)
            .map(|i| format!("{i}. message number {i}"))
            .collect::<Vec<_>>()
            .join("\n");
        let items = parse_generation(&raw, 10);
        assert_eq!(items.len(), 10);
        assert_eq!(items[0], "message number 1");
        assert_eq!(items[9], "message number 10");
    }

    #[test]
    fn parse_fallback_blocks() {
        let raw = "first candidate message\nstill first\n\nsecond candidate message";
        assert_eq!(
            parse_generation(raw, 10),
            vec![
                "first candidate message still first".to_string(),
                "second candidate message".to_string()
            ]
        );
    }

    #[test]
    fn parse_never_returns_blank_items() {
        let raw = "1. \n2. real item\n3.     \n4. another";
        let items = parse_generation(raw, 10);
        assert_eq!(items, vec!["real item".to_string(), "another".to_string()]);
    }

    #[test]
    fn templates_missing_section_errors() {
        let config = KvConfig::parse("[role_smishing]\nbody\n").unwrap();
        assert!(matches!(
            PromptTemplateSet::from_config(&config),
            Err(PromptError::MissingTemplate { .. })
        ));
    }

    #[test]
    fn bundle_with_demo_messages_round_trips_serde() {
        let templates = PromptTemplateSet::embedded_default();
        let demos = demo_sample(Label::Smishing, Some(PersuasionPrinciple::Authority));
        let bundle = build_prompt(
            Label::Smishing,
            Some(PersuasionPrinciple::Authority),
            &demos,
            10,
            &templates,
        )
        .unwrap();
        let json = serde_json::to_string(&bundle).unwrap();
        let back: PromptBundle = serde_json::from_str(&json).unwrap();
        assert_eq!(back.prompt_id, bundle.prompt_id);
        assert_eq!(back.demos.len(), 5);
        assert!(back.demos.iter().all(|d| d.source == Source::Original));
    }
}
