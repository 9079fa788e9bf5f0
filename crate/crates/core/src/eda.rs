//! Lexical augmentation: synonym replacement, random insertion, random swap,
//! and random deletion over whitespace tokens.
//!
//! The perturbation strength alpha sets the per-sentence edit count
//! n = max(1, round(alpha * l)) for the first three transforms and the
//! per-token deletion probability for the fourth. All four are pure
//! functions of (text, seed): callers derive a per-message seed and can
//! parallelize freely.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::hash::rng_from_seed;

static DEFAULT_LEXICON: &str = include_str!("assets/lexicon.tsv");
static DEFAULT_STOPWORDS: &str = include_str!("assets/stopwords.txt");

/// Default perturbation strength.
pub const DEFAULT_ALPHA: f64 = 0.1;

/// The four transform techniques.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Technique {
    SynonymReplacement,
    RandomInsertion,
    RandomSwap,
    RandomDeletion,
}

impl Technique {
    pub const ALL: [Technique; 4] = [
        Technique::SynonymReplacement,
        Technique::RandomInsertion,
        Technique::RandomSwap,
        Technique::RandomDeletion,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Technique::SynonymReplacement => "sr",
            Technique::RandomInsertion => "ri",
            Technique::RandomSwap => "rs",
            Technique::RandomDeletion => "rd",
        }
    }

    pub fn parse(value: &str) -> Option<Self> {
        match value.trim().to_lowercase().as_str() {
            "sr" => Some(Technique::SynonymReplacement),
            "ri" => Some(Technique::RandomInsertion),
            "rs" => Some(Technique::RandomSwap),
            "rd" => Some(Technique::RandomDeletion),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EdaError {
    #[error("alpha must be in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed lexicon line {line}: {reason}")]
    MalformedLexicon { line: usize, reason: String },
}

/// Case-insensitive word -> synonyms map.
///
/// Synonyms equal to their headword and multi-token synonyms are dropped at
/// load time, so a replacement always changes the token and never changes
/// the token count.
#[derive(Debug, Clone, Default)]
pub struct SynonymLexicon {
    entries: std::collections::HashMap<String, Vec<String>>,
}

impl SynonymLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse the `word<TAB>synonym,synonym,...` format.
    pub fn from_str_format(data: &str) -> Result<Self, EdaError> {
        let mut lexicon = SynonymLexicon::new();
        for (idx, line) in data.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, rest) = line.split_once('\t').ok_or(EdaError::MalformedLexicon {
                line: idx + 1,
                reason: "expected word<TAB>synonyms".into(),
            })?;
            lexicon.insert(word, rest.split(','));
        }
        Ok(lexicon)
    }

    pub fn from_file(path: &Path) -> Result<Self, EdaError> {
        let data = std::fs::read_to_string(path).map_err(|source| EdaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str_format(&data)
    }

    /// The small built-in lexicon tuned for SMS vocabulary.
    pub fn embedded_default() -> Self {
        Self::from_str_format(DEFAULT_LEXICON).expect("embedded lexicon parses")
    }

    /// Insert an entry, applying the same filters as file loading.
    pub fn insert<'a>(&mut self, word: &str, synonyms: impl IntoIterator<Item = &'a str>) {
        let key = word.trim().to_lowercase();
        if key.is_empty() {
            return;
        }
        let list: Vec<String> = synonyms
            .into_iter()
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .filter(|s| !s.contains(char::is_whitespace))
            .filter(|s| s.to_lowercase() != key)
            .map(str::to_string)
            .collect();
        if !list.is_empty() {
            self.entries.insert(key, list);
        }
    }

    pub fn lookup(&self, word: &str) -> Option<&[String]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parameters shared by all four transforms.
#[derive(Debug, Clone)]
pub struct EdaParams {
    pub alpha: f64,
    pub seed: u64,
    pub stopwords: HashSet<String>,
}

impl EdaParams {
    /// Validated constructor: alpha must sit in (0, 1].
    pub fn new(alpha: f64, seed: u64) -> Result<Self, EdaError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(EdaError::InvalidAlpha(alpha));
        }
        Ok(EdaParams {
            alpha,
            seed,
            stopwords: default_stopwords(),
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        EdaParams {
            seed,
            ..self.clone()
        }
    }

    pub fn with_stopwords_file(mut self, path: &Path) -> Result<Self, EdaError> {
        let data = std::fs::read_to_string(path).map_err(|source| EdaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.stopwords = data
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        Ok(self)
    }

    fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(&token.to_lowercase())
    }
}

/// The built-in English stopword list.
pub fn default_stopwords() -> HashSet<String> {
    DEFAULT_STOPWORDS
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect()
}

fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Edit count for a sentence of `l` tokens: max(1, round(alpha * l)).
pub fn edit_count(alpha: f64, token_count: usize) -> usize {
    ((alpha * token_count as f64).round() as usize).max(1)
}

/// Positions of tokens eligible as replacement targets or synonym sources.
fn candidate_positions(tokens: &[&str], lexicon: &SynonymLexicon, params: &EdaParams) -> Vec<usize> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| !params.is_stopword(t) && lexicon.lookup(t).is_some())
        .map(|(i, _)| i)
        .collect()
}

/// Replace up to n non-stopword tokens with a synonym each.
///
/// Exactly min(n, replaceable) tokens change; the token count never does.
/// Returns the input unchanged when nothing is replaceable.
pub fn synonym_replacement(text: &str, lexicon: &SynonymLexicon, params: &EdaParams) -> String {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return text.to_string();
    }
    let mut rng = rng_from_seed(params.seed);
    let n = edit_count(params.alpha, tokens.len());

    let mut candidates = candidate_positions(&tokens, lexicon, params);
    candidates.shuffle(&mut rng);
    candidates.truncate(n);

    let mut out: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
    for pos in candidates {
        let synonyms = lexicon.lookup(tokens[pos]).expect("candidate has entry");
        out[pos] = synonyms[rng.random_range(0..synonyms.len())].clone();
    }
    out.join(" ")
}

/// Insert n synonyms of random non-stopword tokens at random positions.
pub fn random_insertion(text: &str, lexicon: &SynonymLexicon, params: &EdaParams) -> String {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return text.to_string();
    }
    let sources = candidate_positions(&tokens, lexicon, params);
    if sources.is_empty() {
        return text.to_string();
    }
    let mut rng = rng_from_seed(params.seed);
    let n = edit_count(params.alpha, tokens.len());

    let mut out: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
    for _ in 0..n {
        let source = sources[rng.random_range(0..sources.len())];
        let synonyms = lexicon.lookup(tokens[source]).expect("source has entry");
        let synonym = synonyms[rng.random_range(0..synonyms.len())].clone();
        let position = rng.random_range(0..=out.len());
        out.insert(position, synonym);
    }
    out.join(" ")
}

/// Swap n uniformly sampled position pairs (which may coincide).
pub fn random_swap(text: &str, params: &EdaParams) -> String {
    let tokens = tokenize(text);
    if tokens.len() < 2 {
        return text.to_string();
    }
    let mut rng = rng_from_seed(params.seed);
    let n = edit_count(params.alpha, tokens.len());

    let mut out: Vec<&str> = tokens.clone();
    for _ in 0..n {
        let i = rng.random_range(0..out.len());
        let j = rng.random_range(0..out.len());
        out.swap(i, j);
    }
    out.join(" ")
}

/// Delete each token independently with probability alpha, keeping one
/// uniformly chosen token when everything would go.
pub fn random_deletion(text: &str, params: &EdaParams) -> String {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return text.to_string();
    }
    let mut rng = rng_from_seed(params.seed);
    let kept: Vec<&str> = tokens
        .iter()
        .filter(|_| rng.random::<f64>() >= params.alpha)
        .copied()
        .collect();
    if kept.is_empty() {
        return tokens[rng.random_range(0..tokens.len())].to_string();
    }
    kept.join(" ")
}

/// Dispatch on technique.
pub fn apply(
    technique: Technique,
    text: &str,
    lexicon: &SynonymLexicon,
    params: &EdaParams,
) -> String {
    match technique {
        Technique::SynonymReplacement => synonym_replacement(text, lexicon, params),
        Technique::RandomInsertion => random_insertion(text, lexicon, params),
        Technique::RandomSwap => random_swap(text, params),
        Technique::RandomDeletion => random_deletion(text, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAYTM: &str = "Dear (paytm)customer your paytm KYC has been suspended PAY-TM office PH \
                         7679046492 Your Paytm A/C will block within 24hr Thank you.";

    fn params(seed: u64) -> EdaParams {
        EdaParams::new(DEFAULT_ALPHA, seed).unwrap()
    }

    fn table4_sr_lexicon() -> SynonymLexicon {
        let mut lexicon = SynonymLexicon::new();
        lexicon.insert("office", ["place"]);
        lexicon.insert("within", ["inside"]);
        lexicon
    }

    #[test]
    fn alpha_out_of_range_rejected() {
        assert!(EdaParams::new(0.0, 1).is_err());
        assert!(EdaParams::new(-0.1, 1).is_err());
        assert!(EdaParams::new(1.5, 1).is_err());
        assert!(EdaParams::new(1.0, 1).is_ok());
    }

    #[test]
    fn edit_count_rounds_half_up_with_floor_one() {
        assert_eq!(edit_count(0.1, 21), 2); // 2.1 -> 2
        assert_eq!(edit_count(0.1, 25), 3); // 2.5 -> 3
        assert_eq!(edit_count(0.1, 3), 1); // 0.3 -> floor 1
        assert_eq!(edit_count(0.1, 1), 1);
    }

    #[test]
    fn lexicon_drops_self_and_multiword_synonyms() {
        let mut lexicon = SynonymLexicon::new();
        lexicon.insert("Office", ["office", "OFFICE", "work place", "place"]);
        assert_eq!(lexicon.lookup("office").unwrap(), &["place".to_string()]);
        lexicon.insert("dog", ["dog"]);
        assert!(lexicon.lookup("dog").is_none());
    }

    #[test]
    fn sr_reproduces_published_replacement() {
        // Both eligible tokens get replaced (n = 2), whatever the seed.
        let out = synonym_replacement(PAYTM, &table4_sr_lexicon(), &params(7));
        assert_eq!(
            out,
            "Dear (paytm)customer your paytm KYC has been suspended PAY-TM place PH 7679046492 \
             Your Paytm A/C will block inside 24hr Thank you."
        );
    }

    #[test]
    fn sr_all_stopwords_unchanged() {
        let lexicon = SynonymLexicon::embedded_default();
        let text = "you are the only one here";
        assert_eq!(synonym_replacement(text, &lexicon, &params(3)), text);
    }

    #[test]
    fn sr_preserves_token_count_and_changes_exact_positions() {
        let lexicon = SynonymLexicon::embedded_default();
        let stopwords = default_stopwords();
        for seed in 0..200 {
            let p = params(seed);
            let out = synonym_replacement(PAYTM, &lexicon, &p);
            let before: Vec<&str> = PAYTM.split_whitespace().collect();
            let after: Vec<&str> = out.split_whitespace().collect();
            assert_eq!(before.len(), after.len());
            let replaceable = before
                .iter()
                .filter(|t| {
                    !stopwords.contains(&t.to_lowercase()) && lexicon.lookup(t).is_some()
                })
                .count();
            let n = edit_count(p.alpha, before.len());
            let changed = before
                .iter()
                .zip(&after)
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(changed, n.min(replaceable));
        }
    }

    #[test]
    fn ri_reproduces_published_insertion() {
        // Seed 171 places "place" after KYC and "billet" after been,
        // matching the published insertion example.
        let mut lexicon = SynonymLexicon::new();
        lexicon.insert("office", ["place", "billet"]);
        let out = random_insertion(PAYTM, &lexicon, &params(171));
        assert_eq!(
            out,
            "Dear (paytm)customer your paytm KYC place has been billet suspended PAY-TM office \
             PH 7679046492 Your Paytm A/C will block within 24hr Thank you."
        );
    }

    #[test]
    fn rs_reproduces_published_swaps() {
        // Seed 38942 swaps suspended<->Your and Paytm<->will.
        let out = random_swap(PAYTM, &params(38942));
        assert_eq!(
            out,
            "Dear (paytm)customer your paytm KYC has been Your PAY-TM office PH 7679046492 \
             suspended will A/C Paytm block within 24hr Thank you."
        );
    }

    #[test]
    fn ri_empty_lexicon_unchanged() {
        let out = random_insertion(PAYTM, &SynonymLexicon::new(), &params(5));
        assert_eq!(out, PAYTM);
    }

    #[test]
    fn ri_grows_by_exactly_n_with_coverage() {
        let mut lexicon = SynonymLexicon::new();
        for word in ["alpha", "beta", "gamma", "delta"] {
            lexicon.insert(word, ["x1", "x2"]);
        }
        let text = "alpha beta gamma delta alpha beta gamma delta alpha beta";
        let p = EdaParams::new(0.3, 11).unwrap();
        let n = edit_count(0.3, 10);
        let out = random_insertion(text, &lexicon, &p);
        assert_eq!(out.split_whitespace().count(), 10 + n);
    }

    #[test]
    fn rs_preserves_token_multiset() {
        for seed in 0..100 {
            let out = random_swap(PAYTM, &params(seed));
            let mut before: Vec<&str> = PAYTM.split_whitespace().collect();
            let mut after: Vec<&str> = out.split_whitespace().collect();
            before.sort_unstable();
            after.sort_unstable();
            assert_eq!(before, after);
        }
    }

    #[test]
    fn rs_single_token_unchanged() {
        assert_eq!(random_swap("hello", &params(1)), "hello");
    }

    #[test]
    fn rd_zero_probability_is_identity() {
        // p = 0 sits outside the validated range; build params directly to
        // exercise the transform's own limit behavior.
        let p = EdaParams {
            alpha: 0.0,
            seed: 9,
            stopwords: default_stopwords(),
        };
        assert_eq!(random_deletion(PAYTM, &p), PAYTM);
    }

    #[test]
    fn rd_probability_one_keeps_exactly_one_token() {
        let p = EdaParams::new(1.0, 4).unwrap();
        let out = random_deletion(PAYTM, &p);
        assert_eq!(out.split_whitespace().count(), 1);
        assert!(PAYTM.split_whitespace().any(|t| t == out));
    }

    #[test]
    fn rd_mean_survivors_tracks_binomial() {
        // 10,000 trials on a 100-token text at p = 0.1. The mean surviving
        // count is binomial with per-trial sigma = sqrt(100 * .1 * .9) = 3,
        // so the mean over trials has sigma 3/100 = 0.03.
        let text = vec!["tok"; 100].join(" ");
        let trials = 10_000;
        let mut total = 0usize;
        for seed in 0..trials {
            let p = params(seed as u64);
            total += random_deletion(&text, &p).split_whitespace().count();
        }
        let mean = total as f64 / trials as f64;
        let sigma_mean = 3.0 / (trials as f64).sqrt();
        assert!(
            (mean - 90.0).abs() <= 3.0 * sigma_mean,
            "mean {mean} outside 90 +/- {}",
            3.0 * sigma_mean
        );
    }

    #[test]
    fn transforms_deterministic_given_seed() {
        let lexicon = SynonymLexicon::embedded_default();
        let p = params(1234);
        for technique in Technique::ALL {
            let a = apply(technique, PAYTM, &lexicon, &p);
            let b = apply(technique, PAYTM, &lexicon, &p);
            assert_eq!(a, b, "{technique:?} not deterministic");
            let other = apply(technique, PAYTM, &lexicon, &p.with_seed(4321));
            // Different seeds usually differ; at minimum they must not panic.
            let _ = other;
        }
    }

    #[test]
    fn transforms_never_return_empty() {
        let lexicon = SynonymLexicon::embedded_default();
        for seed in 0..50 {
            let p = EdaParams::new(1.0, seed).unwrap();
            for technique in Technique::ALL {
                let out = apply(technique, "urgent verify now", &lexicon, &p);
                assert!(!out.trim().is_empty(), "{technique:?} returned empty");
            }
        }
    }

    #[test]
    fn embedded_assets_load() {
        let lexicon = SynonymLexicon::embedded_default();
        assert!(lexicon.len() > 50);
        assert!(lexicon.lookup("OFFICE").is_some());
        let stopwords = default_stopwords();
        assert!(stopwords.contains("the"));
        assert!(!stopwords.contains("within"));
    }
}
