//! Stratified train/test splitting and class rebalancing (random
//! oversampling and SMOTE). Everything is seed-deterministic and
//! independent of thread count.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::features::SparseVector;

pub const DEFAULT_SMOTE_K: usize = 5;

#[derive(Debug, Error)]
pub enum ResampleError {
    #[error("test_fraction must be in (0, 1), got {0}")]
    BadTestFraction(f64),
    #[error("class {label} has {count} members; at least 2 required")]
    ClassTooSmall { label: Label, count: usize },
    #[error("vectors and labels have different lengths ({vectors} vs {labels})")]
    MismatchedLengths { vectors: usize, labels: usize },
    #[error("both classes must be present")]
    SingleClass,
    #[error("minority class has a single member; SMOTE needs at least 2")]
    MinorityTooSmall,
    #[error("smote k must be at least 1")]
    BadK,
}

/// A train/test partition by index, persistable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub test_fraction: f64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Shuffles each class with the seed and slices `round(test_fraction * n)`
/// of it into the test set. Classes are processed in ordinal order on one
/// RNG stream; output index lists are sorted.
pub fn stratified_split(
    labels: &[Label],
    test_fraction: f64,
    seed: u64,
) -> Result<Split, ResampleError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(ResampleError::BadTestFraction(test_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in Label::ALL {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == label)
            .map(|(i, _)| i)
            .collect();
        if members.len() < 2 {
            return Err(ResampleError::ClassTooSmall { label, count: members.len() });
        }
        members.shuffle(&mut rng);
        let n_test = round_half_up(test_fraction * members.len() as f64);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { seed, test_fraction, train, test })
}

/// Where an appended row came from: `source` is always a minority-class
/// index; SMOTE rows also carry the neighbor and interpolation factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: usize,
    pub neighbor: Option<usize>,
    pub lambda: Option<f64>,
}

/// Rebalanced data: the originals first (untouched), appended rows after,
/// one provenance record per appended row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledSet {
    pub vectors: Vec<SparseVector>,
    pub labels: Vec<Label>,
    pub provenance: Vec<Provenance>,
}

impl ResampledSet {
    pub fn class_count(&self, label: Label) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }
}

struct ClassSplit {
    minority: Vec<usize>,
    minority_label: Label,
    need: usize,
}

fn split_classes(labels: &[Label]) -> Result<Option<ClassSplit>, ResampleError> {
    let f41: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == Label::F41Anxiety)
        .map(|(i, _)| i)
        .collect();
    let f43: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == Label::F43Adjustment)
        .map(|(i, _)| i)
        .collect();
    if f41.is_empty() || f43.is_empty() {
        return Err(ResampleError::SingleClass);
    }
    if f41.len() == f43.len() {
        return Ok(None);
    }
    let (minority, minority_label, need) = if f41.len() < f43.len() {
        (f41.clone(), Label::F41Anxiety, f43.len() - f41.len())
    } else {
        (f43.clone(), Label::F43Adjustment, f41.len() - f43.len())
    };
    Ok(Some(ClassSplit { minority, minority_label, need }))
}

fn check_lengths(vectors: &[SparseVector], labels: &[Label]) -> Result<(), ResampleError> {
    if vectors.len() != labels.len() {
        return Err(ResampleError::MismatchedLengths {
            vectors: vectors.len(),
            labels: labels.len(),
        });
    }
    Ok(())
}

/// Appends uniformly drawn (with replacement) copies of minority rows until
/// the class counts are equal.
pub fn random_oversample(
    vectors: &[SparseVector],
    labels: &[Label],
    seed: u64,
) -> Result<ResampledSet, ResampleError> {
    check_lengths(vectors, labels)?;
    let mut out = ResampledSet {
        vectors: vectors.to_vec(),
        labels: labels.to_vec(),
        provenance: Vec::new(),
    };
    let Some(plan) = split_classes(labels)? else {
        return Ok(out);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..plan.need {
        let source = plan.minority[rng.random_range(0..plan.minority.len())];
        out.vectors.push(vectors[source].clone());
        out.labels.push(plan.minority_label);
        out.provenance.push(Provenance { source, neighbor: None, lambda: None });
    }
    Ok(out)
}

/// SMOTE: synthesizes minority rows by interpolating each round-robin
/// minority sample toward one of its k nearest minority neighbors
/// (Euclidean; k capped at minority_count - 1; distance ties broken by
/// lower index). Per synthetic row the neighbor is drawn first, then
/// lambda uniform in [0, 1).
pub fn smote(
    vectors: &[SparseVector],
    labels: &[Label],
    k: usize,
    seed: u64,
) -> Result<ResampledSet, ResampleError> {
    check_lengths(vectors, labels)?;
    if k == 0 {
        return Err(ResampleError::BadK);
    }
    let mut out = ResampledSet {
        vectors: vectors.to_vec(),
        labels: labels.to_vec(),
        provenance: Vec::new(),
    };
    let Some(plan) = split_classes(labels)? else {
        return Ok(out);
    };
    let m = plan.minority.len();
    if m < 2 {
        return Err(ResampleError::MinorityTooSmall);
    }
    let k_eff = k.min(m - 1);

    // k nearest minority neighbors per minority row, excluding itself
    let neighbors: Vec<Vec<usize>> = plan
        .minority
        .iter()
        .map(|&gi| {
            let mut dists: Vec<(f64, usize)> = plan
                .minority
                .iter()
                .filter(|&&gj| gj != gi)
                .map(|&gj| (vectors[gi].sq_distance(&vectors[gj]), gj))
                .collect();
            dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            dists.truncate(k_eff);
            dists.into_iter().map(|(_, gj)| gj).collect()
        })
        .collect();
    let local_of = |gi: usize| plan.minority.binary_search(&gi).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = plan.minority.clone();
    order.shuffle(&mut rng);
    for j in 0..plan.need {
        let source = order[j % m];
        let opts = &neighbors[local_of(source)];
        let neighbor = opts[rng.random_range(0..opts.len())];
        let lambda: f64 = rng.random();
        let synthetic = SparseVector::interpolate(&vectors[source], &vectors[neighbor], lambda);
        out.vectors.push(synthetic);
        out.labels.push(plan.minority_label);
        out.provenance.push(Provenance {
            source,
            neighbor: Some(neighbor),
            lambda: Some(lambda),
        });
    }
    Ok(out)
}

/// Rebalancing strategy selector used by training and tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Oversampler {
    None,
    Random,
    Smote { k: usize },
}

impl Oversampler {
    pub fn apply(
        &self,
        vectors: &[SparseVector],
        labels: &[Label],
        seed: u64,
    ) -> Result<ResampledSet, ResampleError> {
        match self {
            Oversampler::None => {
                check_lengths(vectors, labels)?;
                Ok(ResampledSet {
                    vectors: vectors.to_vec(),
                    labels: labels.to_vec(),
                    provenance: Vec::new(),
                })
            }
            Oversampler::Random => random_oversample(vectors, labels, seed),
            Oversampler::Smote { k } => smote(vectors, labels, *k, seed),
        }
    }
}

impl std::fmt::Display for Oversampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Oversampler::None => write!(f, "none"),
            Oversampler::Random => write!(f, "random"),
            Oversampler::Smote { k } => write!(f, "smote(k={k})"),
        }
    }
}
