//! Desk-scale classification harness: TF-IDF features over unigrams and
//! bigrams plus an L2-regularized logistic regression, fit by full-batch
//! gradient descent. Smishing is the positive class throughout.
//!
//! The vocabulary is built from the training split only; evaluation is the
//! first and only point where test texts are read.

use std::collections::{BTreeMap, HashMap};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Label, Message};
use crate::hash::rng_from_seed;
use crate::validator::{DEFAULT_PHONE_PATTERN, DEFAULT_URL_PATTERN};
use rand::seq::SliceRandom;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("training set has only one class ({smishing} smishing / {other} other)")]
    SingleClass { smishing: usize, other: usize },
    #[error("training set is empty")]
    EmptyTrain,
    #[error("test set is empty")]
    EmptyTest,
    #[error("{context}: expected {expected} folds, found {found}")]
    MismatchedFolds {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("no rows to aggregate")]
    NoRows,
}

/// Training hyperparameters. Everything is deterministic given the seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Regularization strengths tried by inner cross-validation on the
    /// training split; a single entry skips the grid search.
    pub lambda_grid: Vec<f64>,
    pub cv_folds: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            learning_rate: 0.5,
            epochs: 150,
            lambda_grid: vec![1e-4, 1e-3, 1e-2],
            cv_folds: 3,
            seed: 0,
        }
    }
}

/// Feature tokenizer: URL and phone occurrences collapse to shape tokens,
/// the rest is lowercased and split on non-alphanumerics.
#[derive(Debug, Clone)]
pub struct FeatureTokenizer {
    url: Regex,
    phone: Regex,
}

impl Default for FeatureTokenizer {
    fn default() -> Self {
        FeatureTokenizer {
            url: Regex::new(DEFAULT_URL_PATTERN).expect("url pattern compiles"),
            phone: Regex::new(DEFAULT_PHONE_PATTERN).expect("phone pattern compiles"),
        }
    }
}

pub const URL_SHAPE_TOKEN: &str = "__url__";
pub const PHONE_SHAPE_TOKEN: &str = "__phone__";

impl FeatureTokenizer {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let with_urls = self.url.replace_all(text, format!(" {URL_SHAPE_TOKEN} "));
        let with_phones = self
            .phone
            .replace_all(&with_urls, format!(" {PHONE_SHAPE_TOKEN} "));
        with_phones
            .split(|c: char| !c.is_alphanumeric() && c != '_')
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect()
    }

    /// Unigrams plus adjacent bigrams.
    fn terms(&self, text: &str) -> Vec<String> {
        let tokens = self.tokenize(text);
        let mut terms = tokens.clone();
        for pair in tokens.windows(2) {
            terms.push(format!("{} {}", pair[0], pair[1]));
        }
        terms
    }
}

/// TF-IDF vocabulary fit on training texts only.
#[derive(Debug, Clone)]
pub struct FeatureSpace {
    vocab: HashMap<String, usize>,
    idf: Vec<f64>,
    tokenizer: FeatureTokenizer,
}

impl FeatureSpace {
    pub fn fit<S: AsRef<str>>(texts: &[S]) -> FeatureSpace {
        let tokenizer = FeatureTokenizer::default();
        // BTreeMap so index assignment never depends on hash order.
        let mut document_frequency: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            let mut seen: Vec<&String> = Vec::new();
            let terms = tokenizer.terms(text.as_ref());
            let unique: std::collections::BTreeSet<&String> = terms.iter().collect();
            for term in unique {
                *document_frequency.entry(term.clone()).or_insert(0) += 1;
                seen.push(term);
            }
        }
        let n = texts.len() as f64;
        let mut vocab = HashMap::with_capacity(document_frequency.len());
        let mut idf = Vec::with_capacity(document_frequency.len());
        for (index, (term, df)) in document_frequency.into_iter().enumerate() {
            vocab.insert(term, index);
            // Plain idf, so duplicating every document leaves weights fixed.
            idf.push((n / df as f64).ln() + 1.0);
        }
        FeatureSpace {
            vocab,
            idf,
            tokenizer,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn contains_term(&self, term: &str) -> bool {
        self.vocab.contains_key(term)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.vocab.keys().map(String::as_str)
    }

    /// Sparse L2-normalized tf-idf vector, sorted by feature index.
    pub fn vector(&self, text: &str) -> Vec<(usize, f64)> {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for term in self.tokenizer.terms(text) {
            if let Some(&index) = self.vocab.get(&term) {
                *counts.entry(index).or_insert(0.0) += 1.0;
            }
        }
        let mut vector: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(index, tf)| (index, tf * self.idf[index]))
            .collect();
        let norm = vector.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in vector.iter_mut() {
                *v /= norm;
            }
        }
        vector
    }
}

/// Trained linear classifier over a [`FeatureSpace`].
#[derive(Debug, Clone)]
pub struct LinearModel {
    space: FeatureSpace,
    weights: Vec<f64>,
    bias: f64,
    pub lambda: f64,
    pub hyper: TrainHyper,
}

impl LinearModel {
    pub fn score(&self, text: &str) -> f64 {
        let z = self
            .space
            .vector(text)
            .iter()
            .map(|(index, value)| self.weights[*index] * value)
            .sum::<f64>()
            + self.bias;
        sigmoid(z)
    }

    pub fn predict(&self, text: &str) -> Label {
        if self.score(text) >= 0.5 {
            Label::Smishing
        } else {
            Label::Spam
        }
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn weights(&self) -> (&[f64], f64) {
        (&self.weights, self.bias)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn fit_weights(
    vectors: &[Vec<(usize, f64)>],
    targets: &[f64],
    dims: usize,
    lambda: f64,
    hyper: &TrainHyper,
) -> (Vec<f64>, f64) {
    let n = vectors.len() as f64;
    let mut weights = vec![0.0; dims];
    let mut bias = 0.0;
    for _ in 0..hyper.epochs {
        let mut grad_w = vec![0.0; dims];
        let mut grad_b = 0.0;
        for (vector, &target) in vectors.iter().zip(targets) {
            let z = vector
                .iter()
                .map(|(index, value)| weights[*index] * value)
                .sum::<f64>()
                + bias;
            let err = sigmoid(z) - target;
            for (index, value) in vector {
                grad_w[*index] += err * value;
            }
            grad_b += err;
        }
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= hyper.learning_rate * (g / n + lambda * *w);
        }
        bias -= hyper.learning_rate * (grad_b / n);
    }
    (weights, bias)
}

/// Train on a message slice. The feature space and all gradient steps see
/// only these messages.
pub fn train(messages: &[Message], hyper: &TrainHyper) -> Result<LinearModel, EvalError> {
    if messages.is_empty() {
        return Err(EvalError::EmptyTrain);
    }
    let smishing = messages
        .iter()
        .filter(|m| m.label == Label::Smishing)
        .count();
    let other = messages.len() - smishing;
    if smishing == 0 || other == 0 {
        return Err(EvalError::SingleClass { smishing, other });
    }

    let texts: Vec<&str> = messages.iter().map(|m| m.text.as_str()).collect();
    let space = FeatureSpace::fit(&texts);
    let vectors: Vec<Vec<(usize, f64)>> = texts.iter().map(|t| space.vector(t)).collect();
    let targets: Vec<f64> = messages
        .iter()
        .map(|m| if m.label == Label::Smishing { 1.0 } else { 0.0 })
        .collect();

    let lambda = select_lambda(&vectors, &targets, space.vocab_size(), hyper);
    let (weights, bias) = fit_weights(&vectors, &targets, space.vocab_size(), lambda, hyper);
    Ok(LinearModel {
        space,
        weights,
        bias,
        lambda,
        hyper: hyper.clone(),
    })
}

/// Pick a regularization strength by stratified cross-validation on the
/// training split; ties go to the smaller lambda.
fn select_lambda(
    vectors: &[Vec<(usize, f64)>],
    targets: &[f64],
    dims: usize,
    hyper: &TrainHyper,
) -> f64 {
    let mut grid = hyper.lambda_grid.clone();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite lambdas"));
    grid.dedup();
    if grid.is_empty() {
        return 0.0;
    }
    if grid.len() == 1 || vectors.len() < 2 * hyper.cv_folds.max(2) {
        return grid[0];
    }

    // Stratified fold assignment: shuffle each class, deal round-robin.
    let folds = hyper.cv_folds.max(2);
    let mut assignment = vec![0usize; vectors.len()];
    let mut rng = rng_from_seed(hyper.seed);
    for class in [0.0, 1.0] {
        let mut members: Vec<usize> = (0..vectors.len())
            .filter(|&i| targets[i] == class)
            .collect();
        members.shuffle(&mut rng);
        for (position, index) in members.into_iter().enumerate() {
            assignment[index] = position % folds;
        }
    }

    let mut best = (grid[0], -1.0f64);
    for &lambda in &grid {
        let mut correct = 0usize;
        let mut total = 0usize;
        for fold in 0..folds {
            let train_idx: Vec<usize> =
                (0..vectors.len()).filter(|&i| assignment[i] != fold).collect();
            let val_idx: Vec<usize> =
                (0..vectors.len()).filter(|&i| assignment[i] == fold).collect();
            if train_idx.is_empty() || val_idx.is_empty() {
                continue;
            }
            // Guard against single-class inner folds on tiny inputs.
            let train_pos = train_idx.iter().filter(|&&i| targets[i] == 1.0).count();
            if train_pos == 0 || train_pos == train_idx.len() {
                continue;
            }
            let sub_vectors: Vec<Vec<(usize, f64)>> =
                train_idx.iter().map(|&i| vectors[i].clone()).collect();
            let sub_targets: Vec<f64> = train_idx.iter().map(|&i| targets[i]).collect();
            let (weights, bias) = fit_weights(&sub_vectors, &sub_targets, dims, lambda, hyper);
            for &i in &val_idx {
                let z = vectors[i]
                    .iter()
                    .map(|(index, value)| weights[*index] * value)
                    .sum::<f64>()
                    + bias;
                let predicted = if sigmoid(z) >= 0.5 { 1.0 } else { 0.0 };
                if predicted == targets[i] {
                    correct += 1;
                }
                total += 1;
            }
        }
        let accuracy = if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        };
        if accuracy > best.1 {
            best = (lambda, accuracy);
        }
    }
    best.0
}

/// Precision, recall, accuracy, F1 with smishing as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
    /// Set when precision or recall hit a zero denominator and were
    /// reported as 0.
    #[serde(default)]
    pub zero_division: bool,
}

impl Metrics {
    pub fn from_confusion(tp: usize, fp: usize, fn_: usize, tn: usize) -> Metrics {
        let mut zero_division = false;
        let mut ratio = |num: usize, den: usize| {
            if den == 0 {
                zero_division = true;
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let accuracy = ratio(tp + tn, tp + fp + fn_ + tn);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            precision,
            recall,
            accuracy,
            f1,
            zero_division,
        }
    }
}

/// Evaluate a model on a test slice. This is the only place test texts are
/// ever read.
pub fn evaluate(model: &LinearModel, test: &[Message]) -> Result<Metrics, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTest);
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for message in test {
        let predicted_smishing = model.predict(&message.text) == Label::Smishing;
        let is_smishing = message.label == Label::Smishing;
        match (predicted_smishing, is_smishing) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(Metrics::from_confusion(tp, fp, fn_, tn))
}

/// One fold's evaluation under one dataset configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub factor: u32,
    pub model_config: String,
    pub fold: usize,
    pub metrics: Metrics,
}

/// Aggregated report row: the mean over fold repeats.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub factor: u32,
    pub model_config: String,
    pub folds: usize,
    pub mean: Metrics,
    /// Mean F1 minus the original-baseline mean F1 for the same model
    /// config, in percentage points of the [0,1] scale.
    pub delta_f1_vs_baseline: Option<f64>,
}

/// Aggregated comparison across methods and factors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub folds: usize,
}

/// The method name baseline rows carry.
pub const BASELINE_METHOD: &str = "original";

/// Aggregate per-fold rows into a report. Every (method, factor, config)
/// group must cover exactly `expected_folds` distinct folds.
pub fn aggregate(rows: &[EvalRow], expected_folds: usize) -> Result<EvalReport, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::NoRows);
    }
    let mut groups: BTreeMap<(String, u32, String), Vec<&EvalRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.method.clone(), row.factor, row.model_config.clone()))
            .or_default()
            .push(row);
    }

    let mut report_rows = Vec::new();
    for ((method, factor, model_config), mut group) in groups {
        group.sort_by_key(|r| r.fold);
        let distinct: std::collections::BTreeSet<usize> = group.iter().map(|r| r.fold).collect();
        if distinct.len() != expected_folds || group.len() != expected_folds {
            return Err(EvalError::MismatchedFolds {
                context: format!("{method} x{factor} [{model_config}]"),
                expected: expected_folds,
                found: distinct.len(),
            });
        }
        let k = group.len() as f64;
        let mean = Metrics {
            precision: group.iter().map(|r| r.metrics.precision).sum::<f64>() / k,
            recall: group.iter().map(|r| r.metrics.recall).sum::<f64>() / k,
            accuracy: group.iter().map(|r| r.metrics.accuracy).sum::<f64>() / k,
            f1: group.iter().map(|r| r.metrics.f1).sum::<f64>() / k,
            zero_division: group.iter().any(|r| r.metrics.zero_division),
        };
        report_rows.push(ReportRow {
            method,
            factor,
            model_config,
            folds: group.len(),
            mean,
            delta_f1_vs_baseline: None,
        });
    }

    // Baseline delta per model config.
    let baselines: BTreeMap<String, f64> = report_rows
        .iter()
        .filter(|r| r.method == BASELINE_METHOD)
        .map(|r| (r.model_config.clone(), r.mean.f1))
        .collect();
    for row in report_rows.iter_mut() {
        row.delta_f1_vs_baseline = baselines
            .get(&row.model_config)
            .map(|baseline| row.mean.f1 - baseline);
    }

    Ok(EvalReport {
        rows: report_rows,
        folds: expected_folds,
    })
}

impl EvalReport {
    /// Comparison table: methods by factor with P/R/Acc/F1 (percent) and
    /// the per-row F1 delta against the original baseline.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# mean over {} folds, smishing positive; values in percent\n",
            self.folds
        ));
        out.push_str(&format!(
            "{:<14} {:>6} {:<16} {:>7} {:>7} {:>7} {:>7} {:>9}\n",
            "method", "factor", "model", "P", "R", "Acc", "F1", "dF1"
        ));
        for row in &self.rows {
            let delta = row
                .delta_f1_vs_baseline
                .map(|d| format!("{:+.1}", d * 100.0))
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!(
                "{:<14} {:>6} {:<16} {:>7.1} {:>7.1} {:>7.1} {:>7.1} {:>9}\n",
                row.method,
                row.factor,
                row.model_config,
                row.mean.precision * 100.0,
                row.mean.recall * 100.0,
                row.mean.accuracy * 100.0,
                row.mean.f1 * 100.0,
                delta,
            ));
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out =
            String::from("method,factor,model,precision,recall,accuracy,f1,delta_f1_vs_baseline\n");
        for row in &self.rows {
            let delta = row
                .delta_f1_vs_baseline
                .map(|d| format!("{:.4}", d))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{:.4},{:.4},{:.4},{:.4},{}\n",
                row.method,
                row.factor,
                row.model_config,
                row.mean.precision,
                row.mean.recall,
                row.mean.accuracy,
                row.mean.f1,
                delta,
            ));
        }
        out
    }
}
