//! Core library for augmenting scarce SMS threat corpora.
//!
//! The pipeline goes: load a labeled SMS corpus, split it into stratified
//! folds, resolve per-message persuasion principles from annotator votes,
//! then grow the training split by a target factor using either lexical
//! transforms (synonym replacement, insertion, swap, deletion) or few-shot
//! LLM generation, with post-hoc validation and deduplication. A lightweight
//! TF-IDF + logistic-regression harness compares the resulting datasets.

pub mod analytics;
pub mod corpus;
pub mod eda;
pub mod evalkit;
pub mod fixturegen;
pub mod gateway;
pub mod hash;
pub mod kvconf;
pub mod pipeline;
pub mod promptgen;
pub mod taxonomy;
pub mod validator;
