//! Core library for the notedx pipeline: Spanish psychiatric note ingestion,
//! text normalization, TF-IDF features, class rebalancing, from-scratch
//! classifiers (decision tree, random forest, SVM, gradient boosted trees),
//! grid search with stratified cross validation, and few-shot diagnosis
//! extraction over a pluggable transport.
//!
//! Everything that draws randomness takes an explicit `u64` seed and is
//! deterministic across runs, platforms, and thread counts.

pub mod corpus;
pub mod dxextract;
pub mod features;
pub mod models;
pub mod preprocess;
pub mod resample;
pub mod surrogate;
pub mod tune;

pub(crate) mod seeding;

pub use corpus::{Corpus, Demographics, Gender, Label};
pub use features::{SparseVector, Vocabulary};
