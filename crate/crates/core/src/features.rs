//! TF-IDF featurization: vocabulary fitting over training documents and
//! sparse vector construction.
//!
//! The vectorizer uses raw term frequency, smoothed idf
//! `ln((1 + n_docs) / (1 + df)) + 1`, and l2 normalization. Terms are indexed
//! in lexicographic order so vocabularies are deterministic regardless of
//! document order.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::Document;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("no documents to fit a vocabulary on")]
    EmptyDocs,
    #[error("every term was filtered out (min_df {min_df}, max_df_ratio {max_df_ratio})")]
    AllTermsFiltered { min_df: usize, max_df_ratio: f64 },
    #[error("max_df_ratio must be in (0, 1], got {0}")]
    BadMaxDfRatio(f64),
    #[error("invalid sparse vector: {0}")]
    InvalidVector(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
}

/// Sparse vector with strictly increasing indices. `l2_normalized` records
/// whether the vector was scaled to unit Euclidean norm (all-zero vectors
/// keep the flag but stay zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SparseVectorData", into = "SparseVectorData")]
pub struct SparseVector {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
    l2_normalized: bool,
}

#[derive(Serialize, Deserialize, Clone)]
struct SparseVectorData {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
    l2_normalized: bool,
}

impl From<SparseVector> for SparseVectorData {
    fn from(v: SparseVector) -> Self {
        SparseVectorData {
            dim: v.dim,
            indices: v.indices,
            values: v.values,
            l2_normalized: v.l2_normalized,
        }
    }
}

impl TryFrom<SparseVectorData> for SparseVector {
    type Error = FeatureError;

    fn try_from(d: SparseVectorData) -> Result<Self, Self::Error> {
        let v = SparseVector::new(d.dim, d.indices.into_iter().zip(d.values).collect())?;
        Ok(SparseVector { l2_normalized: d.l2_normalized, ..v })
    }
}

impl SparseVector {
    /// Builds a vector from (index, value) pairs; they must be strictly
    /// increasing in index, within `dim`, and finite.
    pub fn new(dim: usize, pairs: Vec<(u32, f64)>) -> Result<Self, FeatureError> {
        let mut last: Option<u32> = None;
        for &(i, v) in &pairs {
            if (i as usize) >= dim {
                return Err(FeatureError::InvalidVector(format!(
                    "index {i} out of bounds for dimension {dim}"
                )));
            }
            if let Some(prev) = last {
                if i <= prev {
                    return Err(FeatureError::InvalidVector(format!(
                        "indices not strictly increasing at {i}"
                    )));
                }
            }
            if !v.is_finite() {
                return Err(FeatureError::InvalidVector(format!("non-finite value at index {i}")));
            }
            last = Some(i);
        }
        let (indices, values) = pairs.into_iter().unzip();
        Ok(SparseVector { dim, indices, values, l2_normalized: false })
    }

    /// Dense slice to sparse, dropping exact zeros.
    pub fn from_dense(values: &[f64]) -> SparseVector {
        let pairs = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .collect();
        SparseVector::new(values.len(), pairs).expect("dense conversion is always valid")
    }

    pub fn zeros(dim: usize) -> SparseVector {
        SparseVector { dim, indices: Vec::new(), values: Vec::new(), l2_normalized: false }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn l2_normalized(&self) -> bool {
        self.l2_normalized
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Component at `index` (0.0 when absent).
    pub fn get(&self, index: u32) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i as usize] = v;
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch in dot product");
        let mut sum = 0.0;
        let (mut a, mut b) = (0, 0);
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    sum += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        sum
    }

    /// Squared Euclidean distance.
    pub fn sq_distance(&self, other: &SparseVector) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch in distance");
        let mut sum = 0.0;
        let (mut a, mut b) = (0, 0);
        while a < self.indices.len() || b < other.indices.len() {
            let ia = self.indices.get(a).copied();
            let ib = other.indices.get(b).copied();
            match (ia, ib) {
                (Some(x), Some(y)) if x == y => {
                    let d = self.values[a] - other.values[b];
                    sum += d * d;
                    a += 1;
                    b += 1;
                }
                (Some(x), Some(y)) if x < y => {
                    sum += self.values[a] * self.values[a];
                    a += 1;
                }
                (Some(_), Some(_)) => {
                    sum += other.values[b] * other.values[b];
                    b += 1;
                }
                (Some(_), None) => {
                    sum += self.values[a] * self.values[a];
                    a += 1;
                }
                (None, Some(_)) => {
                    sum += other.values[b] * other.values[b];
                    b += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        sum
    }

    /// Scales to unit norm; the zero vector is returned unchanged with the
    /// flag still set (it is exempt by convention).
    pub fn into_normalized(mut self) -> SparseVector {
        let norm = self.norm();
        if norm > 0.0 {
            for v in &mut self.values {
                *v /= norm;
            }
        }
        self.l2_normalized = true;
        self
    }

    /// Convex interpolation `(1 - lambda) * x + lambda * z`, exact at both
    /// endpoints. Exact zeros produced by the blend are dropped.
    pub fn interpolate(x: &SparseVector, z: &SparseVector, lambda: f64) -> SparseVector {
        assert_eq!(x.dim, z.dim, "dimension mismatch in interpolation");
        let wx = 1.0 - lambda;
        let mut pairs: Vec<(u32, f64)> = Vec::with_capacity(x.nnz() + z.nnz());
        let (mut a, mut b) = (0, 0);
        while a < x.indices.len() || b < z.indices.len() {
            let ia = x.indices.get(a).copied();
            let ib = z.indices.get(b).copied();
            let (idx, value) = match (ia, ib) {
                (Some(i), Some(j)) if i == j => {
                    let v = wx * x.values[a] + lambda * z.values[b];
                    a += 1;
                    b += 1;
                    (i, v)
                }
                (Some(i), Some(j)) if i < j => {
                    let v = wx * x.values[a];
                    a += 1;
                    let _ = j;
                    (i, v)
                }
                (Some(_), Some(j)) => {
                    let v = lambda * z.values[b];
                    b += 1;
                    (j, v)
                }
                (Some(i), None) => {
                    let v = wx * x.values[a];
                    a += 1;
                    (i, v)
                }
                (None, Some(j)) => {
                    let v = lambda * z.values[b];
                    b += 1;
                    (j, v)
                }
                (None, None) => unreachable!(),
            };
            if value != 0.0 {
                pairs.push((idx, value));
            }
        }
        let (indices, values) = pairs.into_iter().unzip();
        SparseVector { dim: x.dim, indices, values, l2_normalized: false }
    }
}

/// Term index fitted on training documents. Indices are assigned in
/// lexicographic term order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyData", into = "VocabularyData")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
    df: Vec<u32>,
    n_docs: usize,
    min_df: usize,
    max_df_ratio: f64,
}

#[derive(Serialize, Deserialize, Clone)]
struct VocabularyData {
    terms: Vec<String>,
    df: Vec<u32>,
    n_docs: usize,
    min_df: usize,
    max_df_ratio: f64,
}

impl From<Vocabulary> for VocabularyData {
    fn from(v: Vocabulary) -> Self {
        VocabularyData {
            terms: v.terms,
            df: v.df,
            n_docs: v.n_docs,
            min_df: v.min_df,
            max_df_ratio: v.max_df_ratio,
        }
    }
}

impl TryFrom<VocabularyData> for Vocabulary {
    type Error = FeatureError;

    fn try_from(d: VocabularyData) -> Result<Self, Self::Error> {
        if d.terms.len() != d.df.len() {
            return Err(FeatureError::InvalidVocabulary(format!(
                "terms/df length mismatch: {} vs {}",
                d.terms.len(),
                d.df.len()
            )));
        }
        for pair in d.terms.windows(2) {
            if pair[0] >= pair[1] {
                return Err(FeatureError::InvalidVocabulary(format!(
                    "terms not sorted/unique at {:?}",
                    pair[1]
                )));
            }
        }
        for (term, &df) in d.terms.iter().zip(&d.df) {
            if (df as usize) < d.min_df || df as usize > d.n_docs {
                return Err(FeatureError::InvalidVocabulary(format!(
                    "df {} for term {term:?} outside [min_df, n_docs]",
                    df
                )));
            }
        }
        let index = d
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Vocabulary {
            terms: d.terms,
            index,
            df: d.df,
            n_docs: d.n_docs,
            min_df: d.min_df,
            max_df_ratio: d.max_df_ratio,
        })
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: u32) -> &str {
        &self.terms[index as usize]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn min_df(&self) -> usize {
        self.min_df
    }

    pub fn max_df_ratio(&self) -> f64 {
        self.max_df_ratio
    }

    /// Smoothed inverse document frequency for a retained term.
    pub fn idf(&self, index: u32) -> f64 {
        let df = self.df[index as usize] as f64;
        ((1.0 + self.n_docs as f64) / (1.0 + df)).ln() + 1.0
    }

    /// TF-IDF vector for a document: raw term counts times idf, then l2
    /// normalization. Out-of-vocabulary tokens are ignored.
    pub fn vectorize(&self, doc: &Document) -> SparseVector {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for token in &doc.tokens {
            if let Some(idx) = self.index_of(token) {
                *counts.entry(idx).or_insert(0) += 1;
            }
        }
        let mut pairs: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(idx, tf)| (idx, tf as f64 * self.idf(idx)))
            .collect();
        pairs.sort_unstable_by_key(|(idx, _)| *idx);
        let (indices, values) = pairs.into_iter().unzip();
        SparseVector { dim: self.len(), indices, values, l2_normalized: false }.into_normalized()
    }
}

/// Fits a vocabulary: keeps terms appearing in at least `min_df` documents
/// and in at most `max_df_ratio` of them.
pub fn build_vocabulary(
    docs: &[Document],
    min_df: usize,
    max_df_ratio: f64,
) -> Result<Vocabulary, FeatureError> {
    if docs.is_empty() {
        return Err(FeatureError::EmptyDocs);
    }
    if !(max_df_ratio > 0.0 && max_df_ratio <= 1.0) {
        return Err(FeatureError::BadMaxDfRatio(max_df_ratio));
    }
    let n_docs = docs.len();
    let mut df: HashMap<&str, u32> = HashMap::new();
    for doc in docs {
        let distinct: HashSet<&str> = doc.tokens.iter().map(String::as_str).collect();
        for term in distinct {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&str, u32)> = df
        .into_iter()
        .filter(|(_, count)| {
            *count as usize >= min_df.max(1)
                && (*count as f64) / (n_docs as f64) <= max_df_ratio
        })
        .collect();
    if kept.is_empty() {
        return Err(FeatureError::AllTermsFiltered { min_df, max_df_ratio });
    }
    kept.sort_unstable_by(|a, b| a.0.cmp(b.0));
    let terms: Vec<String> = kept.iter().map(|(t, _)| t.to_string()).collect();
    let df: Vec<u32> = kept.iter().map(|(_, c)| *c).collect();
    let index = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();
    Ok(Vocabulary { terms, index, df, n_docs, min_df, max_df_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(id: &str, tokens: &[&str]) -> Document {
        Document { note_id: id.into(), tokens: tokens.iter().map(|s| s.to_string()).collect() }
    }

    #[test]
    fn min_df_filters_rare_terms() {
        let docs = vec![doc("1", &["a", "b"]), doc("2", &["a", "c"])];
        let vocab = build_vocabulary(&docs, 2, 1.0).unwrap();
        assert_eq!(vocab.terms(), &["a".to_string()]);
        assert_eq!(vocab.index_of("a"), Some(0));
        assert_eq!(vocab.index_of("b"), None);
    }

    #[test]
    fn no_filtering_keeps_every_term() {
        let docs = vec![doc("1", &["a", "b"]), doc("2", &["a", "c"])];
        let vocab = build_vocabulary(&docs, 1, 1.0).unwrap();
        assert_eq!(vocab.terms(), &["a".to_string(), "b".to_string(), "c".to_string()]);
    }

    #[test]
    fn max_df_excludes_ubiquitous_terms() {
        // "x" in 96 of 100 docs is dropped at ratio 0.95; "y" in 50 stays
        let docs: Vec<Document> = (0..100)
            .map(|i| {
                let mut tokens = vec![];
                if i < 96 {
                    tokens.push("x");
                }
                if i % 2 == 0 {
                    tokens.push("y");
                }
                doc(&i.to_string(), &tokens)
            })
            .collect();
        let vocab = build_vocabulary(&docs, 2, 0.95).unwrap();
        assert_eq!(vocab.terms(), &["y".to_string()]);
        // exactly at the boundary the term stays
        let docs95: Vec<Document> = (0..100)
            .map(|i| {
                let mut tokens = vec!["y"];
                if i < 95 {
                    tokens.push("x");
                }
                doc(&i.to_string(), &tokens)
            })
            .collect();
        let vocab95 = build_vocabulary(&docs95, 2, 0.95).unwrap();
        assert!(vocab95.index_of("x").is_some());
    }

    #[test]
    fn empty_docs_and_all_filtered_are_errors() {
        assert!(matches!(build_vocabulary(&[], 2, 0.95), Err(FeatureError::EmptyDocs)));
        let docs = vec![doc("1", &["a"]), doc("2", &["b"])];
        assert!(matches!(
            build_vocabulary(&docs, 2, 0.95),
            Err(FeatureError::AllTermsFiltered { .. })
        ));
    }

    #[test]
    fn vocabulary_is_order_insensitive() {
        let d1 = vec![doc("1", &["b", "a"]), doc("2", &["a", "c", "b"]), doc("3", &["c", "a"])];
        let mut d2 = d1.clone();
        d2.reverse();
        let v1 = build_vocabulary(&d1, 1, 1.0).unwrap();
        let v2 = build_vocabulary(&d2, 1, 1.0).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn idf_matches_formula() {
        let docs = vec![doc("1", &["a", "b"]), doc("2", &["a", "b"]), doc("3", &["a"])];
        let vocab = build_vocabulary(&docs, 1, 1.0).unwrap();
        let a = vocab.index_of("a").unwrap();
        let b = vocab.index_of("b").unwrap();
        assert!((vocab.idf(a) - ((4.0 / 4.0f64).ln() + 1.0)).abs() < 1e-12);
        assert!((vocab.idf(b) - ((4.0 / 3.0f64).ln() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn vectorize_single_term_is_unit() {
        let docs = vec![doc("1", &["ansiedad"]), doc("2", &["ansiedad"])];
        let vocab = build_vocabulary(&docs, 2, 1.0).unwrap();
        let v = vocab.vectorize(&doc("q", &["ansiedad"]));
        assert_eq!(v.nnz(), 1);
        assert!((v.get(0) - 1.0).abs() < 1e-12);
        assert!(v.l2_normalized());
    }

    #[test]
    fn vectorize_oov_only_is_zero() {
        let docs = vec![doc("1", &["a"]), doc("2", &["a"])];
        let vocab = build_vocabulary(&docs, 2, 1.0).unwrap();
        let v = vocab.vectorize(&doc("q", &["zzz", "yyy"]));
        assert!(v.is_zero());
        assert_eq!(v.norm(), 0.0);
    }

    #[test]
    fn vectorize_equal_terms_split_evenly() {
        let docs = vec![doc("1", &["a", "b"]), doc("2", &["a", "b"])];
        let vocab = build_vocabulary(&docs, 2, 1.0).unwrap();
        let v = vocab.vectorize(&doc("q", &["a", "b"]));
        let expected = 1.0 / 2.0f64.sqrt();
        assert!((v.get(0) - expected).abs() < 1e-12);
        assert!((v.get(1) - expected).abs() < 1e-12);
        assert!((v.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn vocabulary_round_trips_through_json() {
        let docs = vec![doc("1", &["a", "b", "c"]), doc("2", &["a", "b"]), doc("3", &["a"])];
        let vocab = build_vocabulary(&docs, 1, 1.0).unwrap();
        let json = serde_json::to_string(&vocab).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vocab);
        let v1 = vocab.vectorize(&doc("q", &["a", "c", "c"]));
        let v2 = back.vectorize(&doc("q", &["a", "c", "c"]));
        assert_eq!(v1, v2);
    }

    #[test]
    fn corrupt_vocabulary_is_rejected() {
        let json = r#"{"terms":["b","a"],"df":[1,1],"n_docs":2,"min_df":1,"max_df_ratio":1.0}"#;
        assert!(serde_json::from_str::<Vocabulary>(json).is_err());
        let json = r#"{"terms":["a"],"df":[1,2],"n_docs":2,"min_df":1,"max_df_ratio":1.0}"#;
        assert!(serde_json::from_str::<Vocabulary>(json).is_err());
    }

    #[test]
    fn sparse_vector_validation() {
        assert!(SparseVector::new(3, vec![(0, 1.0), (2, 2.0)]).is_ok());
        assert!(SparseVector::new(3, vec![(2, 1.0), (0, 2.0)]).is_err());
        assert!(SparseVector::new(3, vec![(0, 1.0), (0, 2.0)]).is_err());
        assert!(SparseVector::new(3, vec![(3, 1.0)]).is_err());
        assert!(SparseVector::new(3, vec![(0, f64::NAN)]).is_err());
    }

    #[test]
    fn sparse_ops_match_dense() {
        let a = SparseVector::from_dense(&[1.0, 0.0, 2.0, 0.0]);
        let b = SparseVector::from_dense(&[0.0, 3.0, 4.0, 0.0]);
        assert!((a.dot(&b) - 8.0).abs() < 1e-12);
        assert!((a.sq_distance(&b) - (1.0 + 9.0 + 4.0)).abs() < 1e-12);
        assert_eq!(a.get(2), 2.0);
        assert_eq!(a.get(1), 0.0);
    }

    #[test]
    fn interpolation_endpoints_are_exact() {
        let x = SparseVector::from_dense(&[0.1, 0.0, 0.7]);
        let z = SparseVector::from_dense(&[0.0, 0.3, 0.2]);
        assert_eq!(SparseVector::interpolate(&x, &z, 0.0), x);
        assert_eq!(SparseVector::interpolate(&x, &z, 1.0), z);
        let mid = SparseVector::interpolate(&x, &z, 0.5);
        assert!((mid.get(0) - 0.05).abs() < 1e-12);
        assert!((mid.get(1) - 0.15).abs() < 1e-12);
        assert!((mid.get(2) - 0.45).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn interpolation_stays_coordinatewise_bounded(
            xs in proptest::collection::vec(-10.0f64..10.0, 6),
            zs in proptest::collection::vec(-10.0f64..10.0, 6),
            lambda in 0.0f64..=1.0,
        ) {
            let x = SparseVector::from_dense(&xs);
            let z = SparseVector::from_dense(&zs);
            let s = SparseVector::interpolate(&x, &z, lambda);
            for i in 0..6u32 {
                let lo = xs[i as usize].min(zs[i as usize]) - 1e-9;
                let hi = xs[i as usize].max(zs[i as usize]) + 1e-9;
                prop_assert!(s.get(i) >= lo && s.get(i) <= hi);
            }
        }

        #[test]
        fn no_zero_columns_after_fit(
            token_ids in proptest::collection::vec(proptest::collection::vec(0usize..8, 1..6), 3..12)
        ) {
            let names = ["t0", "t1", "t2", "t3", "t4", "t5", "t6", "t7"];
            let docs: Vec<Document> = token_ids
                .iter()
                .enumerate()
                .map(|(i, ids)| {
                    let tokens: Vec<&str> = ids.iter().map(|&t| names[t]).collect();
                    doc(&i.to_string(), &tokens)
                })
                .collect();
            if let Ok(vocab) = build_vocabulary(&docs, 2, 1.0) {
                let mut seen = vec![false; vocab.len()];
                for d in &docs {
                    for (i, _) in vocab.vectorize(d).iter() {
                        seen[i as usize] = true;
                    }
                }
                prop_assert!(seen.iter().all(|s| *s), "zero column in training matrix");
            }
        }
    }
}
