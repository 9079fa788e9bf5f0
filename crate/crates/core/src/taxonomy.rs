//! The five-principle persuasion taxonomy, multi-annotator vote aggregation,
//! and inter-annotator agreement.
//!
//! Labels arrive as one `(message, annotator, principle)` record per vote.
//! Aggregation resolves each message by majority vote; messages without a
//! clear majority stay unresolved and are exported for manual consensus
//! rather than silently dropped. Agreement across the full record set is
//! summarized with Fleiss' kappa.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::MessageId;

/// Default number of agreeing annotators required for a decision.
pub const DEFAULT_MAJORITY_THRESHOLD: usize = 3;

/// Number of categories in the taxonomy.
pub const PRINCIPLE_COUNT: usize = 5;

/// One of the five persuasion principles a deceptive message can lean on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PersuasionPrinciple {
    #[serde(rename = "P1")]
    Authority,
    #[serde(rename = "P2")]
    SocialProof,
    #[serde(rename = "P3")]
    LikingSimilarityDeception,
    #[serde(rename = "P4")]
    Distraction,
    #[serde(rename = "P5")]
    CommitmentIntegrityReciprocation,
}

impl PersuasionPrinciple {
    pub const ALL: [PersuasionPrinciple; PRINCIPLE_COUNT] = [
        PersuasionPrinciple::Authority,
        PersuasionPrinciple::SocialProof,
        PersuasionPrinciple::LikingSimilarityDeception,
        PersuasionPrinciple::Distraction,
        PersuasionPrinciple::CommitmentIntegrityReciprocation,
    ];

    /// Short code used in files and reports.
    pub fn code(&self) -> &'static str {
        match self {
            PersuasionPrinciple::Authority => "P1",
            PersuasionPrinciple::SocialProof => "P2",
            PersuasionPrinciple::LikingSimilarityDeception => "P3",
            PersuasionPrinciple::Distraction => "P4",
            PersuasionPrinciple::CommitmentIntegrityReciprocation => "P5",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PersuasionPrinciple::Authority => "Authority",
            PersuasionPrinciple::SocialProof => "Social Proof",
            PersuasionPrinciple::LikingSimilarityDeception => "Liking, Similarity, and Deception",
            PersuasionPrinciple::Distraction => "Distraction",
            PersuasionPrinciple::CommitmentIntegrityReciprocation => {
                "Commitment, Integrity, and Reciprocation"
            }
        }
    }

    /// Working definition of the principle, embedded in generation prompts.
    pub fn definition(&self) -> &'static str {
        match self {
            PersuasionPrinciple::Authority => {
                "This principle operates on the premise that society conditions individuals to \
                 respect and follow authority figures without questioning. People are inclined \
                 to comply with experts or authoritative figures, as demonstrated in scenarios \
                 such as receiving an email purportedly from the recipient's bank, featuring \
                 the bank name in the subject line."
            }
            PersuasionPrinciple::SocialProof => {
                "Centered on the tendency for individuals to emulate the behavior of the \
                 majority, this principle suggests that people lower their guard when they \
                 perceive others engaging in similar actions. An example includes an email \
                 from an alleged system administrator, using an email address from the \
                 recipient's workplace, requesting the recipient to test a link also being \
                 tested by colleagues."
            }
            PersuasionPrinciple::LikingSimilarityDeception => {
                "This principle underscores people's inclination to follow or relate to \
                 individuals they know, like, or find attractive. However, the principle notes \
                 that appearances can be deceiving, exemplified by an email from a supposed \
                 friend urging the recipient to visit an intriguing website."
            }
            PersuasionPrinciple::Distraction => {
                "Focused on diverting attention by emphasizing gains, losses, emotional \
                 states, or scarcity, this principle heightens emotional states to influence \
                 decision-making. For instance, an email claiming the recipient won a \
                 substantial lottery prize strategically shifts the focus from crucial \
                 details, such as the absence of a purchased lottery ticket."
            }
            PersuasionPrinciple::CommitmentIntegrityReciprocation => {
                "This principle explores the automatic response of reciprocating a favor or \
                 action tied to a sense of commitment from a previous situation. An example \
                 involves an email promising a favorable house deal for a recipient actively \
                 seeking a house, emphasizing the urgency of a deposit payment to secure the \
                 commitment."
            }
        }
    }

    /// Position in [`Self::ALL`]; doubles as the category index for kappa.
    pub fn index(&self) -> usize {
        *self as usize
    }

    /// Parse a code ("P1".."P5") or a name, case-insensitively.
    pub fn parse(value: &str) -> Option<Self> {
        let v = value.trim().to_lowercase();
        match v.as_str() {
            "p1" | "authority" => Some(PersuasionPrinciple::Authority),
            "p2" | "social proof" | "socialproof" | "social_proof" => {
                Some(PersuasionPrinciple::SocialProof)
            }
            "p3" | "liking" | "liking, similarity, and deception" | "liking_similarity_deception" => {
                Some(PersuasionPrinciple::LikingSimilarityDeception)
            }
            "p4" | "distraction" => Some(PersuasionPrinciple::Distraction),
            "p5"
            | "commitment"
            | "commitment, integrity, and reciprocation"
            | "commitment_integrity_reciprocation" => {
                Some(PersuasionPrinciple::CommitmentIntegrityReciprocation)
            }
            _ => None,
        }
    }
}

impl std::fmt::Display for PersuasionPrinciple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// One annotator's vote on one message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub message_id: MessageId,
    pub annotator_id: String,
    pub principle: PersuasionPrinciple,
}

/// Outcome of aggregating all votes on one message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationResult {
    pub message_id: MessageId,
    /// `None` means unresolved: no principle reached the threshold.
    pub decided: Option<PersuasionPrinciple>,
    /// Vote counts per principle; absent principles received zero votes.
    pub votes: BTreeMap<PersuasionPrinciple, usize>,
    /// True when `decided` came from a manual-consensus override file.
    #[serde(default)]
    pub via_override: bool,
}

impl AggregationResult {
    pub fn total_votes(&self) -> usize {
        self.votes.values().sum()
    }
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("duplicate annotation for message {message_id} by annotator {annotator_id}")]
    DuplicateAnnotation {
        message_id: MessageId,
        annotator_id: String,
    },
    #[error("message {message_id} has {found} ratings but {expected} were expected")]
    UnequalRatingCounts {
        message_id: MessageId,
        expected: usize,
        found: usize,
    },
    #[error("kappa needs at least 2 raters per message, found {found}")]
    NotEnoughRaters { found: usize },
    #[error("kappa needs at least 2 rated messages, found {found}")]
    NotEnoughMessages { found: usize },
    #[error("kappa is undefined: expected chance agreement is 1")]
    DegenerateChanceAgreement,
    #[error("unknown principle {value:?} at line {line}")]
    UnknownPrinciple { value: String, line: usize },
    #[error("annotation file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed annotation row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
}

/// Resolve each message's principle by majority vote.
///
/// A message is decided when a single principle holds the strict maximum of
/// its votes and that count reaches `threshold`. Ties and sub-threshold
/// maxima stay unresolved. Output is ordered by message id, so the record
/// order never matters.
pub fn majority_vote(
    records: &[AnnotationRecord],
    threshold: usize,
) -> Result<Vec<AggregationResult>, TaxonomyError> {
    let mut per_message: BTreeMap<MessageId, BTreeMap<String, PersuasionPrinciple>> =
        BTreeMap::new();
    for record in records {
        let voters = per_message.entry(record.message_id.clone()).or_default();
        if voters
            .insert(record.annotator_id.clone(), record.principle)
            .is_some()
        {
            return Err(TaxonomyError::DuplicateAnnotation {
                message_id: record.message_id.clone(),
                annotator_id: record.annotator_id.clone(),
            });
        }
    }

    let mut results = Vec::with_capacity(per_message.len());
    for (message_id, voters) in per_message {
        let mut votes: BTreeMap<PersuasionPrinciple, usize> = BTreeMap::new();
        for principle in voters.values() {
            *votes.entry(*principle).or_insert(0) += 1;
        }
        let max = votes.values().copied().max().unwrap_or(0);
        let leaders: Vec<PersuasionPrinciple> = votes
            .iter()
            .filter(|(_, &count)| count == max)
            .map(|(&p, _)| p)
            .collect();
        let decided = if max >= threshold && leaders.len() == 1 {
            Some(leaders[0])
        } else {
            None
        };
        results.push(AggregationResult {
            message_id,
            decided,
            votes,
            via_override: false,
        });
    }
    Ok(results)
}

/// Apply a manual-consensus override map onto aggregation results.
///
/// Overrides the decision for matching message ids and marks the result as
/// overridden; vote histograms are left untouched.
pub fn apply_overrides(
    results: &mut [AggregationResult],
    overrides: &BTreeMap<MessageId, PersuasionPrinciple>,
) -> usize {
    let mut applied = 0;
    for result in results.iter_mut() {
        if let Some(principle) = overrides.get(&result.message_id) {
            result.decided = Some(*principle);
            result.via_override = true;
            applied += 1;
        }
    }
    applied
}

/// Fleiss' kappa over a set of annotation records.
///
/// Every rated message must carry the same number of ratings. Returns
/// exactly 1.0 for perfect agreement.
pub fn fleiss_kappa(
    records: &[AnnotationRecord],
    categories: usize,
) -> Result<f64, TaxonomyError> {
    let mut per_message: BTreeMap<MessageId, Vec<usize>> = BTreeMap::new();
    let mut seen: BTreeMap<(MessageId, &str), ()> = BTreeMap::new();
    for record in records {
        if seen
            .insert((record.message_id.clone(), record.annotator_id.as_str()), ())
            .is_some()
        {
            return Err(TaxonomyError::DuplicateAnnotation {
                message_id: record.message_id.clone(),
                annotator_id: record.annotator_id.clone(),
            });
        }
        let row = per_message
            .entry(record.message_id.clone())
            .or_insert_with(|| vec![0; categories]);
        row[record.principle.index()] += 1;
    }

    let mut rows = Vec::with_capacity(per_message.len());
    let mut expected_ratings = None;
    for (message_id, row) in per_message {
        let count: usize = row.iter().sum();
        match expected_ratings {
            None => expected_ratings = Some(count),
            Some(expected) if expected != count => {
                return Err(TaxonomyError::UnequalRatingCounts {
                    message_id,
                    expected,
                    found: count,
                });
            }
            _ => {}
        }
        rows.push(row);
    }
    fleiss_kappa_from_matrix(&rows)
}

/// Fleiss' kappa from an item-by-category vote-count matrix.
pub fn fleiss_kappa_from_matrix(rows: &[Vec<usize>]) -> Result<f64, TaxonomyError> {
    let item_count = rows.len();
    if item_count < 2 {
        return Err(TaxonomyError::NotEnoughMessages { found: item_count });
    }
    let ratings_per_item: usize = rows[0].iter().sum();
    if ratings_per_item < 2 {
        return Err(TaxonomyError::NotEnoughRaters {
            found: ratings_per_item,
        });
    }
    let categories = rows[0].len();

    let r = ratings_per_item as f64;
    let n = item_count as f64;

    // Per-item agreement P_i = (sum_j n_ij^2 - r) / (r (r - 1))
    let mut p_bar = 0.0;
    for row in rows {
        let sum_sq: usize = row.iter().map(|&c| c * c).sum();
        p_bar += (sum_sq as f64 - r) / (r * (r - 1.0));
    }
    p_bar /= n;

    // Expected chance agreement from category marginals.
    let mut p_e = 0.0;
    for j in 0..categories {
        let column: usize = rows.iter().map(|row| row[j]).sum();
        let share = column as f64 / (n * r);
        p_e += share * share;
    }

    if p_bar >= 1.0 {
        return Ok(1.0);
    }
    let denom = 1.0 - p_e;
    if denom == 0.0 {
        return Err(TaxonomyError::DegenerateChanceAgreement);
    }
    Ok((p_bar - p_e) / denom)
}

/// Load annotation records from CSV (`message_id,annotator_id,principle`)
/// or JSONL, chosen by file extension (`.jsonl`/`.json` means JSONL).
pub fn load_annotation_records(path: &Path) -> Result<Vec<AnnotationRecord>, TaxonomyError> {
    let display = path.display().to_string();
    let io_err = |source| TaxonomyError::Io {
        path: display.clone(),
        source,
    };
    let is_jsonl = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("json")
    );
    let file = std::fs::File::open(path).map_err(io_err)?;
    let reader = std::io::BufReader::new(file);

    let mut records = Vec::new();
    if is_jsonl {
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let record: AnnotationRecord =
                serde_json::from_str(&line).map_err(|e| TaxonomyError::MalformedRow {
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            records.push(record);
        }
    } else {
        let mut csv_reader = csv::Reader::from_reader(reader);
        let headers = csv_reader
            .headers()
            .map_err(|e| TaxonomyError::MalformedRow {
                line: 1,
                reason: e.to_string(),
            })?
            .clone();
        let column = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
        };
        let (id_col, annotator_col, principle_col) = match (
            column("message_id"),
            column("annotator_id"),
            column("principle"),
        ) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(TaxonomyError::MalformedRow {
                    line: 1,
                    reason: "need message_id, annotator_id, principle columns".into(),
                })
            }
        };
        for (idx, row) in csv_reader.records().enumerate() {
            let line = idx + 2;
            let row = row.map_err(|e| TaxonomyError::MalformedRow {
                line,
                reason: e.to_string(),
            })?;
            let field = |col: usize| {
                row.get(col).ok_or_else(|| TaxonomyError::MalformedRow {
                    line,
                    reason: format!("missing column {col}"),
                })
            };
            let raw_principle = field(principle_col)?;
            let principle = PersuasionPrinciple::parse(raw_principle).ok_or_else(|| {
                TaxonomyError::UnknownPrinciple {
                    value: raw_principle.to_string(),
                    line,
                }
            })?;
            records.push(AnnotationRecord {
                message_id: MessageId::new(field(id_col)?),
                annotator_id: field(annotator_col)?.to_string(),
                principle,
            });
        }
    }
    Ok(records)
}

/// Load a manual-override file: CSV with `message_id,principle` columns.
pub fn load_overrides(
    path: &Path,
) -> Result<BTreeMap<MessageId, PersuasionPrinciple>, TaxonomyError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| TaxonomyError::Io {
        path: display,
        source,
    })?;
    let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));
    let mut overrides = BTreeMap::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| TaxonomyError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        let (id, raw) = match (row.get(0), row.get(1)) {
            (Some(id), Some(raw)) => (id, raw),
            _ => {
                return Err(TaxonomyError::MalformedRow {
                    line,
                    reason: "need message_id and principle columns".into(),
                })
            }
        };
        let principle =
            PersuasionPrinciple::parse(raw).ok_or_else(|| TaxonomyError::UnknownPrinciple {
                value: raw.to_string(),
                line,
            })?;
        overrides.insert(MessageId::new(id), principle);
    }
    Ok(overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(message: &str, annotator: &str, principle: PersuasionPrinciple) -> AnnotationRecord {
        AnnotationRecord {
            message_id: MessageId::new(message),
            annotator_id: annotator.to_string(),
            principle,
        }
    }

    fn votes_for(message: &str, counts: [usize; 5]) -> Vec<AnnotationRecord> {
        let mut records = Vec::new();
        let mut annotator = 0;
        for (idx, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                records.push(record(
                    message,
                    &format!("a{annotator}"),
                    PersuasionPrinciple::ALL[idx],
                ));
                annotator += 1;
            }
        }
        records
    }

    #[test]
    fn five_principles_with_nonempty_definitions() {
        assert_eq!(PersuasionPrinciple::ALL.len(), 5);
        for p in PersuasionPrinciple::ALL {
            assert!(!p.definition().trim().is_empty());
            assert_eq!(PersuasionPrinciple::parse(p.code()), Some(p));
            assert_eq!(PersuasionPrinciple::parse(&p.code().to_lowercase()), Some(p));
        }
    }

    #[test]
    fn majority_three_two_split_decides() {
        let records = votes_for("m1", [3, 2, 0, 0, 0]);
        let results = majority_vote(&records, 3).unwrap();
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].decided, Some(PersuasionPrinciple::Authority));
        assert_eq!(results[0].total_votes(), 5);
    }

    #[test]
    fn majority_unanimous_decides() {
        let records = votes_for("m1", [0, 0, 0, 5, 0]);
        let results = majority_vote(&records, 3).unwrap();
        assert_eq!(results[0].decided, Some(PersuasionPrinciple::Distraction));
    }

    #[test]
    fn majority_two_two_one_is_unresolved() {
        let records = votes_for("m1", [2, 2, 1, 0, 0]);
        let results = majority_vote(&records, 3).unwrap();
        assert_eq!(results[0].decided, None);
    }

    #[test]
    fn majority_duplicate_annotator_rejected() {
        let records = vec![
            record("m1", "a1", PersuasionPrinciple::Authority),
            record("m1", "a1", PersuasionPrinciple::SocialProof),
        ];
        assert!(matches!(
            majority_vote(&records, 3),
            Err(TaxonomyError::DuplicateAnnotation { .. })
        ));
    }

    #[test]
    fn majority_is_order_insensitive() {
        let mut records = votes_for("m1", [3, 2, 0, 0, 0]);
        records.extend(votes_for("m2", [0, 0, 5, 0, 0]));
        let forward = majority_vote(&records, 3).unwrap();
        records.reverse();
        let backward = majority_vote(&records, 3).unwrap();
        assert_eq!(forward, backward);
    }

    #[test]
    fn overrides_take_effect_and_are_flagged() {
        let records = votes_for("m1", [2, 2, 1, 0, 0]);
        let mut results = majority_vote(&records, 3).unwrap();
        let mut overrides = BTreeMap::new();
        overrides.insert(MessageId::new("m1"), PersuasionPrinciple::SocialProof);
        let applied = apply_overrides(&mut results, &overrides);
        assert_eq!(applied, 1);
        assert_eq!(results[0].decided, Some(PersuasionPrinciple::SocialProof));
        assert!(results[0].via_override);
    }

    #[test]
    fn kappa_perfect_agreement_is_exactly_one() {
        let mut records = Vec::new();
        for (m, principle) in [
            ("m1", PersuasionPrinciple::Authority),
            ("m2", PersuasionPrinciple::SocialProof),
            ("m3", PersuasionPrinciple::Distraction),
            ("m4", PersuasionPrinciple::Authority),
        ] {
            for a in 0..5 {
                records.push(record(m, &format!("a{a}"), principle));
            }
        }
        assert_eq!(fleiss_kappa(&records, 5).unwrap(), 1.0);
    }

    /// Independent oracle: kappa computed in exact rational arithmetic.
    fn kappa_rational(rows: &[[usize; 5]]) -> (i128, i128) {
        let n = rows.len() as i128;
        let r = rows[0].iter().sum::<usize>() as i128;
        // P_bar = sum_i (sum_j n_ij^2 - r) / (N r (r-1))
        let mut pbar_num: i128 = 0;
        for row in rows {
            let sum_sq: i128 = row.iter().map(|&c| (c * c) as i128).sum();
            pbar_num += sum_sq - r;
        }
        let pbar_den = n * r * (r - 1);
        // P_e = sum_j col_j^2 / (N r)^2
        let mut pe_num: i128 = 0;
        for j in 0..5 {
            let col: i128 = rows.iter().map(|row| row[j] as i128).sum();
            pe_num += col * col;
        }
        let pe_den = (n * r) * (n * r);
        // kappa = (pbar - pe) / (1 - pe)
        let num = pbar_num * pe_den - pe_num * pbar_den;
        let den = (pe_den - pe_num) * pbar_den;
        (num, den)
    }

    #[test]
    fn kappa_matches_hand_computed_fixture() {
        // Three messages, five raters: (3,2,0,0,0), (1,1,1,1,1), (0,0,5,0,0).
        // By hand: P_1 = 8/20, P_2 = 0, P_3 = 1, so P_bar = 7/15.
        // Marginals 4,3,6,1,1 of 15 give P_e = 63/225 = 7/25.
        // kappa = (7/15 - 7/25) / (1 - 7/25) = (14/75) / (18/25) = 7/27.
        let rows = [[3, 2, 0, 0, 0], [1, 1, 1, 1, 1], [0, 0, 5, 0, 0]];
        let (num, den) = kappa_rational(&rows);
        let oracle = num as f64 / den as f64;
        assert!((oracle - 7.0 / 27.0).abs() < 1e-15);

        let mut records = Vec::new();
        records.extend(votes_for("m1", rows[0]));
        records.extend(votes_for("m2", rows[1]));
        records.extend(votes_for("m3", rows[2]));
        let kappa = fleiss_kappa(&records, 5).unwrap();
        assert!((kappa - oracle).abs() < 1e-9, "kappa={kappa} oracle={oracle}");
    }

    #[test]
    fn kappa_rejects_unequal_rating_counts() {
        let mut records = votes_for("m1", [3, 2, 0, 0, 0]);
        records.extend(votes_for("m2", [0, 0, 4, 0, 0]));
        assert!(matches!(
            fleiss_kappa(&records, 5),
            Err(TaxonomyError::UnequalRatingCounts { .. })
        ));
    }

    #[test]
    fn kappa_rejects_single_rater_and_single_message() {
        let records = vec![
            record("m1", "a1", PersuasionPrinciple::Authority),
            record("m2", "a1", PersuasionPrinciple::SocialProof),
        ];
        assert!(matches!(
            fleiss_kappa(&records, 5),
            Err(TaxonomyError::NotEnoughRaters { .. })
        ));
        let records = votes_for("m1", [3, 2, 0, 0, 0]);
        assert!(matches!(
            fleiss_kappa(&records, 5),
            Err(TaxonomyError::NotEnoughMessages { .. })
        ));
    }

    #[test]
    fn kappa_invariant_under_category_permutation() {
        let rows = [[3, 2, 0, 0, 0], [1, 1, 1, 1, 1], [0, 0, 5, 0, 0]];
        let permuted: Vec<Vec<usize>> = rows
            .iter()
            .map(|row| vec![row[4], row[2], row[0], row[1], row[3]])
            .collect();
        let original: Vec<Vec<usize>> = rows.iter().map(|r| r.to_vec()).collect();
        let a = fleiss_kappa_from_matrix(&original).unwrap();
        let b = fleiss_kappa_from_matrix(&permuted).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn kappa_invariant_under_annotator_relabeling() {
        let mut records = Vec::new();
        records.extend(votes_for("m1", [3, 2, 0, 0, 0]));
        records.extend(votes_for("m2", [0, 0, 5, 0, 0]));
        let before = fleiss_kappa(&records, 5).unwrap();
        for record in records.iter_mut() {
            record.annotator_id = format!("renamed-{}", record.annotator_id);
        }
        let after = fleiss_kappa(&records, 5).unwrap();
        assert_eq!(before, after);
    }
}
