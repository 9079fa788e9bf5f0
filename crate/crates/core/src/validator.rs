//! Candidate post-processing: reject malformed or placeholder-bearing
//! generations and deduplicate against originals and earlier accepts.
//!
//! Rules run in a fixed order (empty, length, placeholder, artifact) so the
//! reported reason is the first failure. Smishing candidates must carry an
//! actionable artifact, a URL or a phone number, when that rule is on;
//! non-ASCII text is allowed throughout.

use std::collections::HashSet;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;

/// Bracketed-placeholder patterns; bounded length so long legitimate
/// bracketed content is not rejected.
pub const DEFAULT_PLACEHOLDER_PATTERNS: [&str; 3] =
    [r"\[[^\]]{1,40}\]", r"\{[^}]{1,40}\}", r"<[A-Za-z _]{1,40}>"];

/// URLs with an explicit scheme or a www. prefix.
pub const DEFAULT_URL_PATTERN: &str = r"(?i)(?:https?://|www\.)[^\s]+";

/// Seven or more digits allowing single spaces, dashes, or parentheses
/// between them.
pub const DEFAULT_PHONE_PATTERN: &str = r"\+?\d(?:[\s()-]?\d){6,}";

#[derive(Debug, Error)]
pub enum ValidatorError {
    #[error("min_chars {min} must be below max_chars {max}")]
    BadLengthBounds { min: usize, max: usize },
    #[error("pattern {pattern:?} does not compile: {source}")]
    BadPattern {
        pattern: String,
        source: regex::Error,
    },
}

/// Why a candidate was rejected, or `Ok` when it was accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Ok,
    Empty,
    TooShort,
    TooLong,
    Placeholder,
    NoActionableArtifact,
    Duplicate,
}

/// Accept/reject decision for one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub accepted: bool,
    pub reason: Reason,
}

impl ValidationVerdict {
    fn ok() -> Self {
        ValidationVerdict {
            accepted: true,
            reason: Reason::Ok,
        }
    }

    fn reject(reason: Reason) -> Self {
        ValidationVerdict {
            accepted: false,
            reason,
        }
    }
}

/// Compiled validation rule set.
#[derive(Debug, Clone)]
pub struct ValidationRules {
    pub min_chars: usize,
    pub max_chars: usize,
    pub placeholder_patterns: Vec<Regex>,
    pub smishing_requires_artifact: bool,
    pub url_pattern: Regex,
    pub phone_pattern: Regex,
}

impl Default for ValidationRules {
    fn default() -> Self {
        ValidationRules::new(10, 500, true).expect("default rules are valid")
    }
}

impl ValidationRules {
    pub fn new(
        min_chars: usize,
        max_chars: usize,
        smishing_requires_artifact: bool,
    ) -> Result<Self, ValidatorError> {
        if min_chars >= max_chars {
            return Err(ValidatorError::BadLengthBounds {
                min: min_chars,
                max: max_chars,
            });
        }
        let compile = |pattern: &str| {
            Regex::new(pattern).map_err(|source| ValidatorError::BadPattern {
                pattern: pattern.to_string(),
                source,
            })
        };
        Ok(ValidationRules {
            min_chars,
            max_chars,
            placeholder_patterns: DEFAULT_PLACEHOLDER_PATTERNS
                .iter()
                .map(|p| compile(p))
                .collect::<Result<_, _>>()?,
            smishing_requires_artifact,
            url_pattern: compile(DEFAULT_URL_PATTERN)?,
            phone_pattern: compile(DEFAULT_PHONE_PATTERN)?,
        })
    }

    pub fn with_placeholder_patterns(
        mut self,
        patterns: &[String],
    ) -> Result<Self, ValidatorError> {
        self.placeholder_patterns = patterns
            .iter()
            .map(|p| {
                Regex::new(p).map_err(|source| ValidatorError::BadPattern {
                    pattern: p.clone(),
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(self)
    }

    pub fn with_url_pattern(mut self, pattern: &str) -> Result<Self, ValidatorError> {
        self.url_pattern = Regex::new(pattern).map_err(|source| ValidatorError::BadPattern {
            pattern: pattern.to_string(),
            source,
        })?;
        Ok(self)
    }

    pub fn with_phone_pattern(mut self, pattern: &str) -> Result<Self, ValidatorError> {
        self.phone_pattern = Regex::new(pattern).map_err(|source| ValidatorError::BadPattern {
            pattern: pattern.to_string(),
            source,
        })?;
        Ok(self)
    }

    /// Stable hash of the rule configuration, for run manifests.
    pub fn config_hash(&self) -> String {
        let spec = format!(
            "min={};max={};artifact={};placeholders={};url={};phone={}",
            self.min_chars,
            self.max_chars,
            self.smishing_requires_artifact,
            self.placeholder_patterns
                .iter()
                .map(|r| r.as_str())
                .collect::<Vec<_>>()
                .join("|"),
            self.url_pattern.as_str(),
            self.phone_pattern.as_str(),
        );
        crate::hash::sha256_hex(&spec)
    }

    pub fn has_artifact(&self, text: &str) -> bool {
        self.url_pattern.is_match(text) || self.phone_pattern.is_match(text)
    }
}

/// Validate a single candidate against the rule set.
///
/// Checks run in order: empty, length bounds, placeholders, actionable
/// artifact (smishing only). Pure and order-insensitive across candidates.
pub fn validate_candidate(text: &str, label: Label, rules: &ValidationRules) -> ValidationVerdict {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return ValidationVerdict::reject(Reason::Empty);
    }
    let chars = trimmed.chars().count();
    if chars < rules.min_chars {
        return ValidationVerdict::reject(Reason::TooShort);
    }
    if chars > rules.max_chars {
        return ValidationVerdict::reject(Reason::TooLong);
    }
    if rules.placeholder_patterns.iter().any(|p| p.is_match(trimmed)) {
        return ValidationVerdict::reject(Reason::Placeholder);
    }
    if label == Label::Smishing && rules.smishing_requires_artifact && !rules.has_artifact(trimmed)
    {
        return ValidationVerdict::reject(Reason::NoActionableArtifact);
    }
    ValidationVerdict::ok()
}

/// Normalized form used for duplicate detection: lowercase, trimmed,
/// internal whitespace runs collapsed to one space.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Incremental deduplicator holding the seen-set of normalized texts.
#[derive(Debug, Clone, Default)]
pub struct Deduper {
    seen: HashSet<String>,
}

impl Deduper {
    pub fn new() -> Self {
        Deduper::default()
    }

    /// Seed the seen-set with existing corpus texts.
    pub fn with_existing<'a>(existing: impl IntoIterator<Item = &'a str>) -> Self {
        let mut deduper = Deduper::new();
        for text in existing {
            deduper.seen.insert(normalize(text));
        }
        deduper
    }

    /// Record a candidate; returns true when its normalized form is new.
    pub fn admit(&mut self, text: &str) -> bool {
        self.seen.insert(normalize(text))
    }

    pub fn contains(&self, text: &str) -> bool {
        self.seen.contains(&normalize(text))
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

/// Keep candidates whose normalized form is unseen among `existing` and
/// earlier-kept candidates, preserving order.
pub fn dedup<'a>(
    candidates: impl IntoIterator<Item = &'a str>,
    existing: impl IntoIterator<Item = &'a str>,
) -> Vec<String> {
    let mut deduper = Deduper::with_existing(existing);
    candidates
        .into_iter()
        .filter(|c| deduper.admit(c))
        .map(str::to_string)
        .collect()
}
