//! SMS corpus loading, validation, serialization, and stratified fold plans.
//!
//! A [`Corpus`] is an ordered list of [`Message`]s with unique ids. Messages
//! remember where they came from: originals carry no provenance, lexical
//! variants point at their parent message, and generated messages point at
//! the prompt that produced them.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{derive_seed, rng_from_seed};
use crate::taxonomy::PersuasionPrinciple;

/// Stable opaque message identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MessageId(pub String);

impl MessageId {
    pub fn new(id: impl Into<String>) -> Self {
        MessageId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for MessageId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Message class. Ham exists only at ingest time; the pipeline works on
/// smishing and spam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Smishing,
    Spam,
    Ham,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Smishing => "smishing",
            Label::Spam => "spam",
            Label::Ham => "ham",
        }
    }

    /// Case-insensitive parse accepting the published spelling variants.
    pub fn parse(value: &str) -> Option<Self> {
        match value.trim().to_lowercase().as_str() {
            "smish" | "smishing" => Some(Label::Smishing),
            "spam" => Some(Label::Spam),
            "ham" => Some(Label::Ham),
            _ => None,
        }
    }
}

/// How a message entered the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "original")]
    Original,
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

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Original => "original",
            Source::EdaSr => "eda-sr",
            Source::EdaRi => "eda-ri",
            Source::EdaRs => "eda-rs",
            Source::EdaRd => "eda-rd",
            Source::LlmTheory => "llm-theory",
            Source::LlmPlain => "llm-plain",
        }
    }

    pub fn parse(value: &str) -> Option<Self> {
        match value.trim().to_lowercase().as_str() {
            "original" => Some(Source::Original),
            "eda-sr" => Some(Source::EdaSr),
            "eda-ri" => Some(Source::EdaRi),
            "eda-rs" => Some(Source::EdaRs),
            "eda-rd" => Some(Source::EdaRd),
            "llm-theory" => Some(Source::LlmTheory),
            "llm-plain" => Some(Source::LlmPlain),
            _ => None,
        }
    }

    pub fn is_eda(&self) -> bool {
        matches!(
            self,
            Source::EdaSr | Source::EdaRi | Source::EdaRs | Source::EdaRd
        )
    }

    pub fn is_llm(&self) -> bool {
        matches!(self, Source::LlmTheory | Source::LlmPlain)
    }
}

/// One SMS text with label and provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: MessageId,
    pub text: String,
    pub label: Label,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principle: Option<PersuasionPrinciple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<MessageId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_id: Option<String>,
}

impl Message {
    /// An original (non-augmented) message.
    pub fn original(id: impl Into<String>, text: impl Into<String>, label: Label) -> Self {
        Message {
            id: MessageId::new(id),
            text: text.into(),
            label,
            source: Source::Original,
            principle: None,
            parent_id: None,
            prompt_id: None,
        }
    }

    /// Check per-message invariants; returns the violation if any.
    pub fn check(&self) -> Result<(), CorpusError> {
        if self.text.trim().is_empty() {
            return Err(CorpusError::EmptyText {
                id: self.id.clone(),
            });
        }
        match self.source {
            Source::Original => {
                if self.parent_id.is_some() || self.prompt_id.is_some() {
                    return Err(CorpusError::BadProvenance {
                        id: self.id.clone(),
                        reason: "original messages carry no parent_id or prompt_id".into(),
                    });
                }
            }
            s if s.is_eda() => {
                if self.parent_id.is_none() {
                    return Err(CorpusError::BadProvenance {
                        id: self.id.clone(),
                        reason: "lexical variants need a parent_id".into(),
                    });
                }
            }
            _ => {
                if self.prompt_id.is_none() {
                    return Err(CorpusError::BadProvenance {
                        id: self.id.clone(),
                        reason: "generated messages need a prompt_id".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Input file format for corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Csv,
    Jsonl,
}

impl CorpusFormat {
    pub fn parse(value: &str) -> Option<Self> {
        match value.trim().to_lowercase().as_str() {
            "csv" => Some(CorpusFormat::Csv),
            "jsonl" | "json" => Some(CorpusFormat::Jsonl),
            _ => None,
        }
    }

    /// Guess from a path extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Csv,
        }
    }
}

/// Ordered list of messages with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub messages: Vec<Message>,
}

impl Corpus {
    pub fn new(messages: Vec<Message>) -> Result<Self, CorpusError> {
        let corpus = Corpus { messages };
        corpus.check()?;
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn label_count(&self, label: Label) -> usize {
        self.messages.iter().filter(|m| m.label == label).count()
    }

    pub fn get(&self, id: &MessageId) -> Option<&Message> {
        self.messages.iter().find(|m| &m.id == id)
    }

    /// Validate id uniqueness and every per-message invariant.
    pub fn check(&self) -> Result<(), CorpusError> {
        let mut seen = HashSet::with_capacity(self.messages.len());
        for message in &self.messages {
            message.check()?;
            if !seen.insert(&message.id) {
                return Err(CorpusError::DuplicateId {
                    id: message.id.clone(),
                });
            }
        }
        Ok(())
    }

    /// Messages whose ids are in `ids`, preserving corpus order.
    pub fn subset(&self, ids: &BTreeSet<MessageId>) -> Vec<Message> {
        self.messages
            .iter()
            .filter(|m| ids.contains(&m.id))
            .cloned()
            .collect()
    }

    /// Stamp resolved principles onto matching messages (by id).
    ///
    /// Unresolved results leave the message untouched.
    pub fn apply_principles(&mut self, results: &[crate::taxonomy::AggregationResult]) -> usize {
        let map: BTreeMap<&MessageId, PersuasionPrinciple> = results
            .iter()
            .filter_map(|r| r.decided.map(|p| (&r.message_id, p)))
            .collect();
        let mut stamped = 0;
        for message in &mut self.messages {
            if let Some(principle) = map.get(&message.id) {
                message.principle = Some(*principle);
                stamped += 1;
            }
        }
        stamped
    }
}

/// One train/test split out of a k-fold plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub repeat_index: usize,
    pub train_ids: BTreeSet<MessageId>,
    pub test_ids: BTreeSet<MessageId>,
    /// Fold-specific seed derived from the master seed; downstream
    /// augmentation runs key their randomness off this.
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: no rows")]
    NoRows { path: String },
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("unknown label {value:?} at row {row}")]
    UnknownLabel { value: String, row: usize },
    #[error("duplicate message id {id}")]
    DuplicateId { id: MessageId },
    #[error("message {id} has empty text")]
    EmptyText { id: MessageId },
    #[error("message {id}: {reason}")]
    BadProvenance { id: MessageId, reason: String },
    #[error("corpus has {size} messages, need at least {k} for {k} folds")]
    TooSmallForFolds { size: usize, k: usize },
    #[error("fold count must be at least 2, got {k}")]
    BadFoldCount { k: usize },
    #[error("cannot write {path}: {source}")]
    WriteIo {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Load a corpus from CSV or JSONL.
///
/// CSV needs `text` and `label` columns (matched case-insensitively; extra
/// columns are ignored); `id`, `source`, `principle`, `parent_id`, and
/// `prompt_id` are optional. Rows labeled ham are removed when `drop_ham`
/// is set. Missing ids are assigned from the row order.
pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    drop_ham: bool,
) -> Result<Corpus, CorpusError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);

    let mut messages = match format {
        CorpusFormat::Csv => load_csv(reader)?,
        CorpusFormat::Jsonl => load_jsonl(reader, &display)?,
    };
    if messages.is_empty() {
        return Err(CorpusError::NoRows { path: display });
    }
    if drop_ham {
        messages.retain(|m| m.label != Label::Ham);
    }
    Corpus::new(messages)
}

fn load_csv<R: std::io::Read>(reader: R) -> Result<Vec<Message>, CorpusError> {
    let mut csv_reader = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    };
    let text_col = column("text").ok_or_else(|| CorpusError::MalformedRow {
        row: 1,
        reason: "missing text column".into(),
    })?;
    let label_col = column("label").ok_or_else(|| CorpusError::MalformedRow {
        row: 1,
        reason: "missing label column".into(),
    })?;
    let id_col = column("id");
    let source_col = column("source");
    let principle_col = column("principle");
    let parent_col = column("parent_id");
    let prompt_col = column("prompt_id");

    let opt = |record: &csv::StringRecord, col: Option<usize>| -> Option<String> {
        col.and_then(|c| record.get(c))
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(str::to_string)
    };

    let mut messages = Vec::new();
    for (idx, record) in csv_reader.records().enumerate() {
        let row = idx + 2; // 1-based, after the header
        let record = record.map_err(|e| CorpusError::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        let text = record
            .get(text_col)
            .ok_or_else(|| CorpusError::MalformedRow {
                row,
                reason: "missing text field".into(),
            })?
            .to_string();
        let raw_label = record
            .get(label_col)
            .ok_or_else(|| CorpusError::MalformedRow {
                row,
                reason: "missing label field".into(),
            })?;
        let label = Label::parse(raw_label).ok_or_else(|| CorpusError::UnknownLabel {
            value: raw_label.to_string(),
            row,
        })?;
        let id = opt(&record, id_col).unwrap_or_else(|| format!("m{:06}", idx + 1));
        let source = match opt(&record, source_col) {
            Some(raw) => Source::parse(&raw).ok_or_else(|| CorpusError::MalformedRow {
                row,
                reason: format!("unknown source {raw:?}"),
            })?,
            None => Source::Original,
        };
        let principle = match opt(&record, principle_col) {
            Some(raw) => Some(PersuasionPrinciple::parse(&raw).ok_or_else(|| {
                CorpusError::MalformedRow {
                    row,
                    reason: format!("unknown principle {raw:?}"),
                }
            })?),
            None => None,
        };
        messages.push(Message {
            id: MessageId::new(id),
            text,
            label,
            source,
            principle,
            parent_id: opt(&record, parent_col).map(MessageId::new),
            prompt_id: opt(&record, prompt_col),
        });
    }
    Ok(messages)
}

fn load_jsonl<R: BufRead>(reader: R, path: &str) -> Result<Vec<Message>, CorpusError> {
    #[derive(Deserialize)]
    struct Row {
        id: Option<String>,
        text: String,
        label: String,
        source: Option<String>,
        principle: Option<String>,
        parent_id: Option<String>,
        prompt_id: Option<String>,
    }

    let mut messages = Vec::new();
    let mut row_number = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        row_number += 1;
        let row: Row = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRow {
            row: idx + 1,
            reason: e.to_string(),
        })?;
        let label = Label::parse(&row.label).ok_or_else(|| CorpusError::UnknownLabel {
            value: row.label.clone(),
            row: idx + 1,
        })?;
        let source = match row.source.as_deref() {
            Some(raw) => Source::parse(raw).ok_or_else(|| CorpusError::MalformedRow {
                row: idx + 1,
                reason: format!("unknown source {raw:?}"),
            })?,
            None => Source::Original,
        };
        let principle = match row.principle.as_deref() {
            Some(raw) => Some(PersuasionPrinciple::parse(raw).ok_or_else(|| {
                CorpusError::MalformedRow {
                    row: idx + 1,
                    reason: format!("unknown principle {raw:?}"),
                }
            })?),
            None => None,
        };
        messages.push(Message {
            id: MessageId::new(row.id.unwrap_or_else(|| format!("m{row_number:06}"))),
            text: row.text,
            label,
            source,
            principle,
            parent_id: row.parent_id.map(MessageId::new),
            prompt_id: row.prompt_id,
        });
    }
    Ok(messages)
}

/// Serialize a corpus to JSONL, one message object per line.
pub fn save_jsonl(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let body = to_jsonl_string(corpus);
    std::fs::write(path, body).map_err(|source| CorpusError::WriteIo {
        path: path.display().to_string(),
        source,
    })
}

/// The canonical JSONL rendering used everywhere a corpus is persisted or
/// byte-compared.
pub fn to_jsonl_string(corpus: &Corpus) -> String {
    let mut out = String::new();
    for message in &corpus.messages {
        out.push_str(&serde_json::to_string(message).expect("message serializes"));
        out.push('\n');
    }
    out
}

/// Serialize a corpus to CSV with the full provenance column set.
pub fn save_csv(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path).map_err(|source| CorpusError::WriteIo {
        path: path.display().to_string(),
        source,
    })?;
    let mut writer = csv::Writer::from_writer(std::io::BufWriter::new(file));
    writer.write_record([
        "id",
        "text",
        "label",
        "source",
        "principle",
        "parent_id",
        "prompt_id",
    ])?;
    for m in &corpus.messages {
        writer.write_record([
            m.id.as_str(),
            m.text.as_str(),
            m.label.as_str(),
            m.source.as_str(),
            m.principle.map(|p| p.code()).unwrap_or(""),
            m.parent_id.as_ref().map(|p| p.as_str()).unwrap_or(""),
            m.prompt_id.as_deref().unwrap_or(""),
        ])?;
    }
    writer
        .into_inner()
        .map_err(|e| CorpusError::WriteIo {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?
        .flush()
        .map_err(|source| CorpusError::WriteIo {
            path: path.display().to_string(),
            source,
        })?;
    Ok(())
}

/// Build k disjoint test folds stratified by label.
///
/// Per-label fold sizes differ by at most one; fold totals land on
/// floor(N/k) or ceil(N/k) because each label's remainder goes to the folds
/// with the smallest running totals. Deterministic given the seed.
pub fn make_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<Vec<FoldPlan>, CorpusError> {
    if k < 2 {
        return Err(CorpusError::BadFoldCount { k });
    }
    if corpus.len() < k {
        return Err(CorpusError::TooSmallForFolds {
            size: corpus.len(),
            k,
        });
    }

    let mut by_label: BTreeMap<Label, Vec<MessageId>> = BTreeMap::new();
    for message in &corpus.messages {
        by_label
            .entry(message.label)
            .or_default()
            .push(message.id.clone());
    }

    let mut totals = vec![0usize; k];
    let mut test_sets: Vec<Vec<MessageId>> = vec![Vec::new(); k];
    for (label, mut ids) in by_label {
        let mut rng = rng_from_seed(derive_seed(seed, &["fold", label.as_str()]));
        ids.shuffle(&mut rng);

        let base = ids.len() / k;
        let extra = ids.len() % k;
        // The folds with the smallest running totals absorb this label's
        // remainder, which keeps overall fold sizes within one of each other.
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&i| (totals[i], i));
        let bonus: HashSet<usize> = order[..extra].iter().copied().collect();

        let mut cursor = 0;
        for (fold, set) in test_sets.iter_mut().enumerate() {
            let take = base + usize::from(bonus.contains(&fold));
            set.extend(ids[cursor..cursor + take].iter().cloned());
            totals[fold] += take;
            cursor += take;
        }
    }

    let all_ids: BTreeSet<MessageId> = corpus.messages.iter().map(|m| m.id.clone()).collect();
    let mut plans = Vec::with_capacity(k);
    for (repeat_index, test) in test_sets.into_iter().enumerate() {
        let test_ids: BTreeSet<MessageId> = test.into_iter().collect();
        let train_ids: BTreeSet<MessageId> = all_ids.difference(&test_ids).cloned().collect();
        plans.push(FoldPlan {
            repeat_index,
            train_ids,
            test_ids,
            seed: derive_seed(seed, &["fold-seed", &repeat_index.to_string()]),
        });
    }
    Ok(plans)
}

/// The bundled synthetic corpus: 50 invented SMS messages (26 smishing,
/// 19 spam, 5 ham) with per-message persuasion annotations on the smishing
/// rows. Used by tests and as a fallback when no real dataset is available.
pub fn bundled_synthetic() -> Corpus {
    static DATA: &str = include_str!("assets/synthetic_corpus.jsonl");
    let messages = load_jsonl(std::io::BufReader::new(DATA.as_bytes()), "bundled")
        .expect("bundled corpus parses");
    Corpus::new(messages).expect("bundled corpus is valid")
}
