//! Descriptive statistics over message texts: character and word counts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("cannot describe an empty text list")]
    EmptyInput,
}

/// Five-number summary of one count distribution. The standard deviation is
/// the population form (divide by n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextStats {
    pub avg: f64,
    pub std: f64,
    pub min: u64,
    pub max: u64,
    pub n: usize,
}

impl TextStats {
    fn from_counts(counts: &[u64]) -> Self {
        let n = counts.len();
        let sum: u64 = counts.iter().sum();
        let avg = sum as f64 / n as f64;
        let var = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - avg;
                d * d
            })
            .sum::<f64>()
            / n as f64;
        TextStats {
            avg,
            std: var.sqrt(),
            min: *counts.iter().min().expect("non-empty"),
            max: *counts.iter().max().expect("non-empty"),
            n,
        }
    }

    /// Sample standard deviation (divide by n-1) over the same counts; used
    /// when checking published tables whose convention is unstated.
    pub fn sample_std_from(counts: &[u64]) -> f64 {
        let n = counts.len();
        if n < 2 {
            return 0.0;
        }
        let avg = counts.iter().sum::<u64>() as f64 / n as f64;
        let ss = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - avg;
                d * d
            })
            .sum::<f64>();
        (ss / (n as f64 - 1.0)).sqrt()
    }
}

/// Character counts (unicode scalars) of each text.
pub fn char_counts<S: AsRef<str>>(texts: &[S]) -> Vec<u64> {
    texts
        .iter()
        .map(|t| t.as_ref().chars().count() as u64)
        .collect()
}

/// Whitespace-token counts of each text.
pub fn word_counts<S: AsRef<str>>(texts: &[S]) -> Vec<u64> {
    texts
        .iter()
        .map(|t| t.as_ref().split_whitespace().count() as u64)
        .collect()
}

/// Character- and word-count summaries of a text list.
///
/// Counts run over the raw stored text; trim upstream if leading and
/// trailing whitespace should not count.
pub fn describe<S: AsRef<str>>(texts: &[S]) -> Result<(TextStats, TextStats), AnalyticsError> {
    if texts.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    Ok((
        TextStats::from_counts(&char_counts(texts)),
        TextStats::from_counts(&word_counts(texts)),
    ))
}

/// One rendered row: a dataset name with both summaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsRow {
    pub dataset: String,
    pub chars: TextStats,
    pub words: TextStats,
}

/// Plain-text table of stats rows, two decimals on avg and std.
pub fn render_text(rows: &[StatsRow]) -> String {
    let mut out = String::new();
    out.push_str("# std is the population standard deviation (divide by n)\n");
    out.push_str(&format!(
        "{:<24} {:>9} {:>8} {:>8} {:>8} {:>9} {:>8} {:>8} {:>8} {:>7}\n",
        "dataset", "char_avg", "char_std", "char_min", "char_max", "word_avg", "word_std",
        "word_min", "word_max", "n"
    ));
    for row in rows {
        out.push_str(&format!(
            "{:<24} {:>9.2} {:>8.2} {:>8} {:>8} {:>9.2} {:>8.2} {:>8} {:>8} {:>7}\n",
            row.dataset,
            row.chars.avg,
            row.chars.std,
            row.chars.min,
            row.chars.max,
            row.words.avg,
            row.words.std,
            row.words.min,
            row.words.max,
            row.chars.n,
        ));
    }
    out
}

/// CSV rendering with the same columns as the text table.
pub fn render_csv(rows: &[StatsRow]) -> String {
    let mut out = String::from(
        "dataset,char_avg,char_std,char_min,char_max,word_avg,word_std,word_min,word_max,n\n",
    );
    for row in rows {
        out.push_str(&format!(
            "{},{:.2},{:.2},{},{},{:.2},{:.2},{},{},{}\n",
            row.dataset,
            row.chars.avg,
            row.chars.std,
            row.chars.min,
            row.chars.max,
            row.words.avg,
            row.words.std,
            row.words.min,
            row.words.max,
            row.chars.n,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_list_has_zero_std() {
        let (chars, words) = describe(&["ab", "ab"]).unwrap();
        assert_eq!(chars.avg, 2.0);
        assert_eq!(chars.std, 0.0);
        assert_eq!(chars.min, 2);
        assert_eq!(chars.max, 2);
        assert_eq!(words.avg, 1.0);
        assert_eq!(words.std, 0.0);
        assert_eq!(words.min, 1);
        assert_eq!(words.max, 1);
    }

    #[test]
    fn five_text_fixture_matches_hand_arithmetic() {
        // char counts [10,3,7,15,2]: mean 37/5 = 7.4,
        //   squared devs 6.76+19.36+0.16+57.76+29.16 = 113.2, var 22.64
        // word counts [2,1,4,3,1]: mean 11/5 = 2.2,
        //   squared devs .04+1.44+3.24+.64+1.44 = 6.8, var 1.36
        let texts = ["alpha beta", "one", "a b c d", "hello world foo", "xy"];
        let (chars, words) = describe(&texts).unwrap();
        assert_eq!(chars.avg, 7.4);
        assert!((chars.std - 22.64_f64.sqrt()).abs() < 1e-12);
        assert_eq!((chars.min, chars.max, chars.n), (2, 15, 5));
        assert_eq!(words.avg, 2.2);
        assert!((words.std - 1.36_f64.sqrt()).abs() < 1e-12);
        assert_eq!((words.min, words.max, words.n), (1, 4, 5));
    }

    #[test]
    fn unicode_scalars_counted_once() {
        let (chars, _) = describe(&["héllo 🎁"]).unwrap();
        assert_eq!(chars.min, 7);
    }

    #[test]
    fn empty_input_rejected() {
        let empty: [&str; 0] = [];
        assert!(matches!(describe(&empty), Err(AnalyticsError::EmptyInput)));
    }

    #[test]
    fn duplication_leaves_all_stats_unchanged() {
        let texts = ["alpha beta", "one", "a b c d", "hello world foo", "xy"];
        let doubled: Vec<&str> = texts.iter().chain(texts.iter()).copied().collect();
        let (c1, w1) = describe(&texts).unwrap();
        let (c2, w2) = describe(&doubled).unwrap();
        for (a, b) in [(c1, c2), (w1, w2)] {
            assert!((a.avg - b.avg).abs() < 1e-9);
            assert!((a.std - b.std).abs() < 1e-9);
            assert_eq!(a.min, b.min);
            assert_eq!(a.max, b.max);
        }
        assert_eq!(c2.n, 10);
    }

    #[test]
    fn permutation_invariant() {
        let texts = ["alpha beta", "one", "a b c d", "hello world foo", "xy"];
        let mut reversed = texts;
        reversed.reverse();
        let (c1, w1) = describe(&texts).unwrap();
        let (c2, w2) = describe(&reversed).unwrap();
        assert!((c1.std - c2.std).abs() < 1e-9);
        assert!((w1.avg - w2.avg).abs() < 1e-9);
        assert_eq!((c1.min, c1.max), (c2.min, c2.max));
        assert_eq!((w1.min, w1.max), (w2.min, w2.max));
    }

    #[test]
    fn renders_two_decimal_tables() {
        let (chars, words) = describe(&["alpha beta", "one"]).unwrap();
        let rows = vec![StatsRow {
            dataset: "fixture".into(),
            chars,
            words,
        }];
        let text = render_text(&rows);
        assert!(text.contains("population standard deviation"));
        assert!(text.contains("fixture"));
        assert!(text.contains("6.50")); // (10 + 3) / 2
        let csv = render_csv(&rows);
        assert!(csv.starts_with("dataset,"));
        assert!(csv.contains("fixture,6.50"));
    }
}
