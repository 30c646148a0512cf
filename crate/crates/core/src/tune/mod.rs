//! Hyperparameter search: parameter grids, stratified k-fold cross
//! validation, metric reports, and timing summaries.
//!
//! A [`SearchGrid`] declares, per model family, an ordered list of parameter
//! names each with a list of candidate values. [`grid_search`] evaluates
//! every combination with stratified k-fold cross validation — oversampling
//! is applied to the training folds only — and picks the combination with
//! the best mean validation score. Results are deterministic for a given
//! seed regardless of thread count, because every (combination, fold) pair
//! derives its own random stream from the base seed.

pub mod metrics;
pub mod timing;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::corpus::Label;
use crate::features::SparseVector;
use crate::models::{
    ClassifierParams, Criterion, ForestParams, GbtParams, KernelKind, KernelSpec, MaxFeatures,
    ModelError, ModelFamily, Splitter, SvmParams, TreeParams,
};
use crate::resample::{Oversampler, ResampleError};
use crate::seeding::derive;

pub use metrics::{eval_from_predictions, evaluate, ClassMetrics, ConfusionMatrix, EvalReport};
pub use timing::{TimingRow, TimingTable};

#[derive(Debug, thiserror::Error)]
pub enum TuneError {
    #[error("cannot score an empty test set")]
    EmptyTestSet,
    #[error("mismatched lengths ({left} vs {right})")]
    MismatchedLengths { left: usize, right: usize },
    #[error("k must be at least 2, got {0}")]
    BadK(usize),
    #[error("class {label} has {count} members; stratified {k}-fold needs at least {k} per class")]
    ClassTooSmall { label: Label, count: usize, k: usize },
    #[error("grid parameter {name:?} must be a non-empty array of candidate values")]
    BadParamList { name: String },
    #[error("family {family} does not accept parameter {name:?}")]
    UnknownParam { family: ModelFamily, name: String },
    #[error("bad value for parameter {name:?}: {detail}")]
    BadParamValue { name: String, detail: String },
    #[error("unsupported family {0}: grid search needs a model this library can train")]
    UnsupportedFamily(ModelFamily),
    #[error("combination ordinal {ordinal} out of range; grid has {total} combinations")]
    OrdinalOutOfRange { ordinal: usize, total: usize },
    #[error("grid is not valid JSON: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
}

/// Metric used to rank configurations during a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectMetric {
    #[default]
    Accuracy,
    WeightedF1,
}

impl SelectMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectMetric::Accuracy => "accuracy",
            SelectMetric::WeightedF1 => "weighted_f1",
        }
    }
}

impl std::fmt::Display for SelectMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SelectMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accuracy" => Ok(SelectMetric::Accuracy),
            // both orders accepted: scikit-style spelling next to ours
            "weighted_f1" | "f1_weighted" => Ok(SelectMetric::WeightedF1),
            other => Err(format!(
                "unknown select metric {other:?} (expected accuracy or weighted_f1)"
            )),
        }
    }
}

/// Splits `labels` into `k` stratified folds and returns the test-row
/// indices of each fold, sorted ascending.
///
/// Each class is shuffled with the seeded stream and dealt round-robin; the
/// dealing cursor carries over from one class to the next so overall fold
/// sizes also stay within one of each other. Every class must have at least
/// `k` members.
pub fn kfold_indices(
    labels: &[Label],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, TuneError> {
    if k < 2 {
        return Err(TuneError::BadK(k));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (row, label) in labels.iter().enumerate() {
        by_class[label.ordinal()].push(row);
    }
    for label in Label::ALL {
        let count = by_class[label.ordinal()].len();
        if count < k {
            return Err(TuneError::ClassTooSmall { label, count, k });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut cursor = 0usize;
    for label in Label::ALL {
        let rows = &mut by_class[label.ordinal()];
        rows.shuffle(&mut rng);
        for &row in rows.iter() {
            folds[cursor].push(row);
            cursor = (cursor + 1) % k;
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// An ordered set of candidate values per parameter for one model family.
///
/// JSON form: `{"family": "svm", "params": {"C": [1, 10], "kernel": ["rbf"]}}`.
/// Combinations are numbered lexicographically over the declared parameter
/// order with the first parameter most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub family: ModelFamily,
    pub params: Map<String, Value>,
}

impl SearchGrid {
    pub fn from_json(data: &str) -> Result<SearchGrid, TuneError> {
        let grid: SearchGrid =
            serde_json::from_str(data).map_err(|e| TuneError::Format(e.to_string()))?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn load(path: &std::path::Path) -> Result<SearchGrid, TuneError> {
        SearchGrid::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid serializes")
    }

    /// Checks that every parameter is a non-empty array and that its name is
    /// one the family accepts.
    pub fn validate(&self) -> Result<(), TuneError> {
        let allowed = allowed_params(self.family);
        for (name, values) in &self.params {
            if !allowed.contains(&name.as_str()) {
                return Err(TuneError::UnknownParam {
                    family: self.family,
                    name: name.clone(),
                });
            }
            match values.as_array() {
                Some(list) if !list.is_empty() => {}
                _ => return Err(TuneError::BadParamList { name: name.clone() }),
            }
        }
        Ok(())
    }

    pub fn total_combinations(&self) -> usize {
        self.params
            .values()
            .map(|v| v.as_array().map_or(0, |a| a.len()))
            .fold(1usize, |acc, len| acc.saturating_mul(len))
    }

    /// Returns combination `ordinal` as a flat `{name: value}` map in the
    /// declared parameter order.
    pub fn combination(&self, ordinal: usize) -> Result<Map<String, Value>, TuneError> {
        let total = self.total_combinations();
        if ordinal >= total {
            return Err(TuneError::OrdinalOutOfRange { ordinal, total });
        }
        let mut picks = vec![0usize; self.params.len()];
        let mut rem = ordinal;
        for (slot, values) in self.params.values().enumerate().rev() {
            let len = values.as_array().expect("validated grid").len();
            picks[slot] = rem % len;
            rem /= len;
        }
        let mut config = Map::new();
        for ((name, values), pick) in self.params.iter().zip(picks) {
            let value = values.as_array().expect("validated grid")[pick].clone();
            config.insert(name.clone(), value);
        }
        Ok(config)
    }
}

/// Bundled reference grids, one JSON document per model family.
pub mod grids {
    pub const DECISION_TREE: &str = include_str!("../../data/grids/decision_tree.json");
    pub const RANDOM_FOREST: &str = include_str!("../../data/grids/random_forest.json");
    pub const SVM: &str = include_str!("../../data/grids/svm.json");
    pub const XGBOOST: &str = include_str!("../../data/grids/xgboost.json");
    pub const DISTILBERT: &str = include_str!("../../data/grids/distilbert.json");
    pub const SCIBERT: &str = include_str!("../../data/grids/scibert.json");

    pub const NAMES: [&str; 6] = [
        "decision_tree",
        "random_forest",
        "svm",
        "xgboost",
        "distilbert",
        "scibert",
    ];

    /// Looks up a bundled grid document by name.
    pub fn bundled(name: &str) -> Option<&'static str> {
        match name {
            "decision_tree" => Some(DECISION_TREE),
            "random_forest" => Some(RANDOM_FOREST),
            "svm" => Some(SVM),
            "xgboost" => Some(XGBOOST),
            "distilbert" => Some(DISTILBERT),
            "scibert" => Some(SCIBERT),
            _ => None,
        }
    }
}

fn allowed_params(family: ModelFamily) -> &'static [&'static str] {
    match family {
        ModelFamily::Tree => &[
            "criterion",
            "splitter",
            "max_depth",
            "min_samples_split",
            "min_samples_leaf",
            "max_features",
            "min_weight_fraction_leaf",
            "random_state",
        ],
        ModelFamily::Forest => &[
            "n_estimators",
            "bootstrap",
            "criterion",
            "max_depth",
            "min_samples_split",
            "min_samples_leaf",
            "max_features",
            "random_state",
        ],
        ModelFamily::Svm => &["C", "gamma", "kernel", "degree", "coef0", "tol", "random_state"],
        ModelFamily::Gbt => &[
            "objective",
            "learning_rate",
            "n_estimators",
            "min_child_weight",
            "gamma",
            "subsample",
            "colsample_bytree",
            "max_depth",
            "lambda",
            "random_state",
        ],
        ModelFamily::Distilbert | ModelFamily::Scibert => {
            &["learning_rate", "batch_size", "epochs"]
        }
    }
}

fn expect_f64(name: &str, value: &Value) -> Result<f64, TuneError> {
    value.as_f64().ok_or_else(|| TuneError::BadParamValue {
        name: name.to_string(),
        detail: format!("expected a number, got {value}"),
    })
}

fn expect_usize(name: &str, value: &Value) -> Result<usize, TuneError> {
    if let Some(n) = value.as_u64() {
        return Ok(n as usize);
    }
    if let Some(f) = value.as_f64() {
        if f >= 0.0 && f.fract() == 0.0 {
            return Ok(f as usize);
        }
    }
    Err(TuneError::BadParamValue {
        name: name.to_string(),
        detail: format!("expected a non-negative integer, got {value}"),
    })
}

fn expect_bool(name: &str, value: &Value) -> Result<bool, TuneError> {
    value.as_bool().ok_or_else(|| TuneError::BadParamValue {
        name: name.to_string(),
        detail: format!("expected true or false, got {value}"),
    })
}

fn expect_str<'v>(name: &str, value: &'v Value) -> Result<&'v str, TuneError> {
    value.as_str().ok_or_else(|| TuneError::BadParamValue {
        name: name.to_string(),
        detail: format!("expected a string, got {value}"),
    })
}

fn parse_named<T: std::str::FromStr<Err = String>>(
    name: &str,
    value: &Value,
) -> Result<T, TuneError> {
    expect_str(name, value)?
        .parse()
        .map_err(|detail| TuneError::BadParamValue { name: name.to_string(), detail })
}

/// Converts one flat `{name: value}` configuration into trainable
/// parameters. Unset names keep their defaults; `random_state` overrides
/// `default_seed` when present.
pub fn config_to_params(
    family: ModelFamily,
    config: &Map<String, Value>,
    default_seed: u64,
) -> Result<ClassifierParams, TuneError> {
    match family {
        ModelFamily::Tree => {
            let mut p = TreeParams { seed: default_seed, ..TreeParams::default() };
            for (name, value) in config {
                apply_tree_param(&mut p, family, name, value)?;
            }
            Ok(ClassifierParams::Tree(p))
        }
        ModelFamily::Forest => {
            let mut p = ForestParams { seed: default_seed, ..ForestParams::default() };
            for (name, value) in config {
                match name.as_str() {
                    "n_estimators" => p.n_estimators = expect_usize(name, value)?,
                    "bootstrap" => p.bootstrap = expect_bool(name, value)?,
                    "random_state" => p.seed = expect_usize(name, value)? as u64,
                    _ => apply_tree_param(&mut p.tree, family, name, value)?,
                }
            }
            Ok(ClassifierParams::Forest(p))
        }
        ModelFamily::Svm => {
            let mut p = SvmParams { seed: default_seed, ..SvmParams::default() };
            let mut kind = p.kernel.kind;
            let mut gamma = p.kernel.gamma;
            let mut degree = p.kernel.degree;
            let mut coef0 = p.kernel.coef0;
            for (name, value) in config {
                match name.as_str() {
                    "C" => p.c = expect_f64(name, value)?,
                    "gamma" => gamma = expect_f64(name, value)?,
                    "kernel" => {
                        kind = match expect_str(name, value)? {
                            "linear" => KernelKind::Linear,
                            "rbf" => KernelKind::Rbf,
                            "poly" => KernelKind::Poly,
                            "sigmoid" => KernelKind::Sigmoid,
                            other => {
                                return Err(TuneError::BadParamValue {
                                    name: name.clone(),
                                    detail: format!("unknown kernel {other:?}"),
                                })
                            }
                        }
                    }
                    "degree" => degree = expect_usize(name, value)? as u32,
                    "coef0" => coef0 = expect_f64(name, value)?,
                    "tol" => p.tol = expect_f64(name, value)?,
                    "random_state" => p.seed = expect_usize(name, value)? as u64,
                    other => {
                        return Err(TuneError::UnknownParam { family, name: other.to_string() })
                    }
                }
            }
            p.kernel = KernelSpec { kind, gamma, degree, coef0 };
            Ok(ClassifierParams::Svm(p))
        }
        ModelFamily::Gbt => {
            let mut p = GbtParams { seed: default_seed, ..GbtParams::default() };
            for (name, value) in config {
                match name.as_str() {
                    "objective" => p.objective = parse_named(name, value)?,
                    "learning_rate" => p.learning_rate = expect_f64(name, value)?,
                    "n_estimators" => p.n_estimators = expect_usize(name, value)?,
                    "min_child_weight" => p.min_child_weight = expect_f64(name, value)?,
                    "gamma" => p.gamma = expect_f64(name, value)?,
                    "subsample" => p.subsample = expect_f64(name, value)?,
                    "colsample_bytree" => p.colsample_bytree = expect_f64(name, value)?,
                    "max_depth" => p.max_depth = expect_usize(name, value)?,
                    "lambda" => p.lambda = expect_f64(name, value)?,
                    "random_state" => p.seed = expect_usize(name, value)? as u64,
                    other => {
                        return Err(TuneError::UnknownParam { family, name: other.to_string() })
                    }
                }
            }
            Ok(ClassifierParams::Gbt(p))
        }
        ModelFamily::Distilbert | ModelFamily::Scibert => {
            Err(TuneError::UnsupportedFamily(family))
        }
    }
}

fn apply_tree_param(
    p: &mut TreeParams,
    family: ModelFamily,
    name: &str,
    value: &Value,
) -> Result<(), TuneError> {
    match name {
        "criterion" => p.criterion = parse_named::<Criterion>(name, value)?,
        "splitter" => p.splitter = parse_named::<Splitter>(name, value)?,
        "max_depth" => {
            p.max_depth = if value.is_null() {
                None
            } else {
                Some(expect_usize(name, value)? as u32)
            }
        }
        "min_samples_split" => p.min_samples_split = expect_usize(name, value)?,
        "min_samples_leaf" => p.min_samples_leaf = expect_usize(name, value)?,
        "max_features" => {
            p.max_features = if value.is_null() {
                MaxFeatures::All
            } else {
                parse_named::<MaxFeatures>(name, value)?
            }
        }
        "min_weight_fraction_leaf" => {
            let f = expect_f64(name, value)?;
            if f != 0.0 {
                return Err(TuneError::BadParamValue {
                    name: name.to_string(),
                    detail: format!("only 0.0 is supported, got {f}"),
                });
            }
        }
        "random_state" => p.seed = expect_usize(name, value)? as u64,
        other => return Err(TuneError::UnknownParam { family, name: other.to_string() }),
    }
    Ok(())
}

/// Cross-validation outcome of one parameter combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub ordinal: usize,
    pub params: Map<String, Value>,
    pub fold_accuracy: Vec<f64>,
    pub fold_weighted_f1: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_weighted_f1: f64,
    pub std_weighted_f1: f64,
    /// Wall time spent evaluating this combination.
    pub seconds: f64,
    /// Set when any fold failed; failed combinations are excluded from
    /// best-combination selection but still recorded.
    pub error: Option<String>,
}

impl CvResult {
    pub fn metric(&self, metric: SelectMetric) -> f64 {
        match metric {
            SelectMetric::Accuracy => self.mean_accuracy,
            SelectMetric::WeightedF1 => self.mean_weighted_f1,
        }
    }
}

/// Everything produced by one grid sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub family: ModelFamily,
    pub select_metric: SelectMetric,
    pub k: usize,
    pub seed: u64,
    pub oversampler: String,
    pub results: Vec<CvResult>,
    /// Ordinal of the best error-free combination (ties go to the lower
    /// ordinal); `None` only when every combination failed.
    pub best_ordinal: Option<usize>,
    /// Sum of per-combination wall times.
    pub total_seconds: f64,
}

impl SweepResult {
    pub fn best(&self) -> Option<&CvResult> {
        self.best_ordinal.map(|o| &self.results[o])
    }

    pub fn timing_row(&self) -> TimingRow {
        TimingRow::from_totals(self.family.as_str(), self.results.len(), self.total_seconds)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep result serializes")
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn run_fold(
    family: ModelFamily,
    config: &Map<String, Value>,
    x: &[SparseVector],
    y: &[Label],
    folds: &[Vec<usize>],
    fold: usize,
    oversampler: &Oversampler,
    seed: u64,
    ordinal: usize,
) -> Result<(f64, f64), TuneError> {
    let model_seed = derive(seed, ordinal as u64, 2 * fold as u64);
    let resample_seed = derive(seed, ordinal as u64, 2 * fold as u64 + 1);
    let params = config_to_params(family, config, model_seed)?;
    let mut train_x = Vec::with_capacity(x.len());
    let mut train_y = Vec::with_capacity(y.len());
    for (other, rows) in folds.iter().enumerate() {
        if other == fold {
            continue;
        }
        for &row in rows {
            train_x.push(x[row].clone());
            train_y.push(y[row]);
        }
    }
    let resampled = oversampler.apply(&train_x, &train_y, resample_seed)?;
    let model = params.train(&resampled.vectors, &resampled.labels)?;
    let test_rows = &folds[fold];
    let predicted: Vec<Label> = test_rows.iter().map(|&row| model.predict(&x[row])).collect();
    let actual: Vec<Label> = test_rows.iter().map(|&row| y[row]).collect();
    let report = eval_from_predictions(&predicted, &actual)?;
    Ok((report.accuracy, report.weighted_f1))
}

fn evaluate_combination(
    grid: &SearchGrid,
    x: &[SparseVector],
    y: &[Label],
    folds: &[Vec<usize>],
    oversampler: &Oversampler,
    seed: u64,
    ordinal: usize,
) -> CvResult {
    let start = Instant::now();
    let config = grid.combination(ordinal).expect("ordinal below total");
    let mut fold_accuracy = Vec::with_capacity(folds.len());
    let mut fold_weighted_f1 = Vec::with_capacity(folds.len());
    let mut error = None;
    for fold in 0..folds.len() {
        match run_fold(grid.family, &config, x, y, folds, fold, oversampler, seed, ordinal) {
            Ok((accuracy, weighted_f1)) => {
                fold_accuracy.push(accuracy);
                fold_weighted_f1.push(weighted_f1);
            }
            Err(e) => {
                error = Some(format!("fold {fold}: {e}"));
                break;
            }
        }
    }
    let (mean_accuracy, std_accuracy) = if error.is_none() {
        mean_std(&fold_accuracy)
    } else {
        (0.0, 0.0)
    };
    let (mean_weighted_f1, std_weighted_f1) = if error.is_none() {
        mean_std(&fold_weighted_f1)
    } else {
        (0.0, 0.0)
    };
    CvResult {
        ordinal,
        params: config,
        fold_accuracy,
        fold_weighted_f1,
        mean_accuracy,
        std_accuracy,
        mean_weighted_f1,
        std_weighted_f1,
        seconds: start.elapsed().as_secs_f64(),
        error,
    }
}

/// Evaluates every combination in `grid` with stratified `k`-fold cross
/// validation on `(x, y)` and returns all per-combination results plus the
/// best ordinal under `select_metric`.
///
/// `oversampler` is applied to the training folds only; validation folds
/// keep the original class balance. A combination that fails to train is
/// recorded with its error and skipped for selection; the sweep itself only
/// fails on structural problems (bad grid, bad k, untrainable family).
pub fn grid_search(
    grid: &SearchGrid,
    x: &[SparseVector],
    y: &[Label],
    k: usize,
    oversampler: &Oversampler,
    seed: u64,
    select_metric: SelectMetric,
) -> Result<SweepResult, TuneError> {
    grid.validate()?;
    if !grid.family.is_trainable() {
        return Err(TuneError::UnsupportedFamily(grid.family));
    }
    if x.len() != y.len() {
        return Err(TuneError::MismatchedLengths { left: x.len(), right: y.len() });
    }
    let folds = kfold_indices(y, k, seed)?;
    let total = grid.total_combinations();
    let results: Vec<CvResult> = (0..total)
        .into_par_iter()
        .map(|ordinal| evaluate_combination(grid, x, y, &folds, oversampler, seed, ordinal))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for result in &results {
        if result.error.is_some() {
            continue;
        }
        let score = result.metric(select_metric);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((result.ordinal, score));
        }
    }
    let total_seconds = results.iter().map(|r| r.seconds).sum();
    Ok(SweepResult {
        family: grid.family,
        select_metric,
        k,
        seed,
        oversampler: oversampler.to_string(),
        results,
        best_ordinal: best.map(|(ordinal, _)| ordinal),
        total_seconds,
    })
}
