//! From-scratch classifiers: decision tree, random forest, SVM trained with
//! SMO, and gradient boosted trees, plus the shared impurity measures, the
//! family selector, and the on-disk model format.

pub mod forest;
pub mod gbt;
pub mod svm;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::features::{SparseVector, Vocabulary};

pub use forest::{train_forest, ForestModel, ForestParams};
pub use gbt::{logistic_grad_hess, train_gbt, GbtModel, GbtObjective, GbtParams, RegressionTree};
pub use svm::{kernel, train_svm, KernelKind, KernelSpec, SvmModel, SvmParams};
pub use tree::{train_tree, MaxFeatures, Splitter, TreeModel, TreeNode, TreeParams};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyInput,
    #[error("training rows and labels differ in length ({rows} vs {labels})")]
    MismatchedLengths { rows: usize, labels: usize },
    #[error("vectors must share one dimension; found {0} and {1}")]
    MixedDimensions(usize, usize),
    #[error("at least one feature required")]
    NoFeatures,
    #[error("both classes must be present in the training set")]
    SingleClass,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("family {0} is not trainable here")]
    UnsupportedFamily(ModelFamily),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Split criterion for classification trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    Entropy,
    LogLoss,
}

impl std::str::FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gini" => Ok(Criterion::Gini),
            "entropy" => Ok(Criterion::Entropy),
            "log_loss" => Ok(Criterion::LogLoss),
            other => Err(format!("unknown criterion {other:?}")),
        }
    }
}

/// Binary class counts with the impurity measures defined on them.
///
/// All methods requiring proportions panic on an empty distribution; callers
/// validate non-emptiness at the training entry points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassDistribution {
    counts: [usize; 2],
}

impl ClassDistribution {
    pub fn new(counts: [usize; 2]) -> ClassDistribution {
        ClassDistribution { counts }
    }

    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a Label>) -> ClassDistribution {
        let mut counts = [0usize; 2];
        for label in labels {
            counts[label.ordinal()] += 1;
        }
        ClassDistribution { counts }
    }

    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }

    pub fn total(&self) -> usize {
        self.counts[0] + self.counts[1]
    }

    pub fn is_pure(&self) -> bool {
        self.counts[0] == 0 || self.counts[1] == 0
    }

    pub fn proportions(&self) -> [f64; 2] {
        let total = self.total();
        assert!(total > 0, "empty class distribution");
        [
            self.counts[0] as f64 / total as f64,
            self.counts[1] as f64 / total as f64,
        ]
    }

    /// Majority class; ties go to the lower ordinal (F41).
    pub fn majority(&self) -> Label {
        if self.counts[1] > self.counts[0] {
            Label::F43Adjustment
        } else {
            Label::F41Anxiety
        }
    }

    /// Gini impurity `1 - sum(p_i^2)`.
    pub fn gini(&self) -> f64 {
        let p = self.proportions();
        1.0 - p[0] * p[0] - p[1] * p[1]
    }

    /// Shannon entropy in bits, `-sum(p_i * log2(p_i))` with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        self.nat_entropy() / std::f64::consts::LN_2
    }

    /// Entropy in nats, `-sum(p_i * ln(p_i))`; this is the "log_loss"
    /// impurity and also what entropy-based split scoring uses internally
    /// (the ln 2 factor cannot change an argmax).
    pub fn nat_entropy(&self) -> f64 {
        let p = self.proportions();
        let term = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
        term(p[0]) + term(p[1])
    }

    pub fn impurity(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Gini => self.gini(),
            Criterion::Entropy => self.entropy(),
            Criterion::LogLoss => self.nat_entropy(),
        }
    }
}

/// y = +1 for F41 (the positive class throughout), -1 for F43.
pub(crate) fn label_to_pm1(label: Label) -> i8 {
    match label {
        Label::F41Anxiety => 1,
        Label::F43Adjustment => -1,
    }
}

pub(crate) fn pm1_to_label(sign_nonneg: bool) -> Label {
    if sign_nonneg {
        Label::F41Anxiety
    } else {
        Label::F43Adjustment
    }
}

/// y = 1 for F41, 0 for F43.
pub(crate) fn label_to_01(label: Label) -> u8 {
    match label {
        Label::F41Anxiety => 1,
        Label::F43Adjustment => 0,
    }
}

/// Model families named in grid and model files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Tree,
    Forest,
    Svm,
    Gbt,
    Distilbert,
    Scibert,
}

impl ModelFamily {
    pub fn is_trainable(self) -> bool {
        !matches!(self, ModelFamily::Distilbert | ModelFamily::Scibert)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Tree => "tree",
            ModelFamily::Forest => "forest",
            ModelFamily::Svm => "svm",
            ModelFamily::Gbt => "gbt",
            ModelFamily::Distilbert => "distilbert",
            ModelFamily::Scibert => "scibert",
        }
    }
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tree" => Ok(ModelFamily::Tree),
            "forest" => Ok(ModelFamily::Forest),
            "svm" => Ok(ModelFamily::Svm),
            "gbt" => Ok(ModelFamily::Gbt),
            "distilbert" => Ok(ModelFamily::Distilbert),
            "scibert" => Ok(ModelFamily::Scibert),
            other => Err(format!(
                "unknown model family {other:?} (expected tree, forest, svm, or gbt)"
            )),
        }
    }
}

/// Family-tagged training parameters; the one entry point tuning and the
/// CLI use to fit any model on labeled vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ClassifierParams {
    Tree(TreeParams),
    Forest(ForestParams),
    Svm(SvmParams),
    Gbt(GbtParams),
}

impl ClassifierParams {
    pub fn family(&self) -> ModelFamily {
        match self {
            ClassifierParams::Tree(_) => ModelFamily::Tree,
            ClassifierParams::Forest(_) => ModelFamily::Forest,
            ClassifierParams::Svm(_) => ModelFamily::Svm,
            ClassifierParams::Gbt(_) => ModelFamily::Gbt,
        }
    }

    pub fn train(
        &self,
        x: &[SparseVector],
        y: &[Label],
    ) -> Result<TrainedClassifier, ModelError> {
        match self {
            ClassifierParams::Tree(p) => Ok(TrainedClassifier::Tree(train_tree(x, y, p)?)),
            ClassifierParams::Forest(p) => Ok(TrainedClassifier::Forest(train_forest(
                x,
                y,
                p.n_estimators,
                &p.tree,
                p.bootstrap,
                p.seed,
            )?)),
            ClassifierParams::Svm(p) => {
                let y_pm: Vec<i8> = y.iter().map(|l| label_to_pm1(*l)).collect();
                Ok(TrainedClassifier::Svm(train_svm(x, &y_pm, p)?))
            }
            ClassifierParams::Gbt(p) => {
                let y01: Vec<u8> = y.iter().map(|l| label_to_01(*l)).collect();
                Ok(TrainedClassifier::Gbt(train_gbt(x, &y01, p)?))
            }
        }
    }
}

/// A fitted model of any family.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedClassifier {
    Tree(TreeModel),
    Forest(ForestModel),
    Svm(SvmModel),
    Gbt(GbtModel),
}

impl TrainedClassifier {
    pub fn family(&self) -> ModelFamily {
        match self {
            TrainedClassifier::Tree(_) => ModelFamily::Tree,
            TrainedClassifier::Forest(_) => ModelFamily::Forest,
            TrainedClassifier::Svm(_) => ModelFamily::Svm,
            TrainedClassifier::Gbt(_) => ModelFamily::Gbt,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            TrainedClassifier::Tree(m) => m.n_features(),
            TrainedClassifier::Forest(m) => m.n_features,
            TrainedClassifier::Svm(m) => m.n_features,
            TrainedClassifier::Gbt(m) => m.n_features,
        }
    }

    pub fn predict(&self, x: &SparseVector) -> Label {
        match self {
            TrainedClassifier::Tree(m) => m.predict(x),
            TrainedClassifier::Forest(m) => m.predict(x),
            TrainedClassifier::Svm(m) => pm1_to_label(m.decision_function(x) >= 0.0),
            TrainedClassifier::Gbt(m) => {
                let (_, one) = m.predict(x);
                pm1_to_label(one == 1)
            }
        }
    }

    /// Confidence toward the positive class F41: a probability for tree,
    /// forest and logistic-family GBT; a margin for SVM and hinge GBT.
    pub fn score(&self, x: &SparseVector) -> f64 {
        match self {
            TrainedClassifier::Tree(m) => m.predict_proba(x)[Label::F41Anxiety.ordinal()],
            TrainedClassifier::Forest(m) => m.vote_fraction(x, Label::F41Anxiety),
            TrainedClassifier::Svm(m) => m.decision_function(x),
            TrainedClassifier::Gbt(m) => {
                let (raw, _) = m.predict(x);
                m.probability_from_raw(raw).unwrap_or(raw)
            }
        }
    }

    fn params_json(&self) -> serde_json::Value {
        match self {
            TrainedClassifier::Tree(m) => serde_json::to_value(&m.params),
            TrainedClassifier::Forest(m) => serde_json::to_value(&m.params),
            TrainedClassifier::Svm(m) => serde_json::to_value(&m.params),
            TrainedClassifier::Gbt(m) => serde_json::to_value(&m.params),
        }
        .expect("model params serialize")
    }

    fn payload_json(&self) -> serde_json::Value {
        match self {
            TrainedClassifier::Tree(m) => {
                serde_json::json!({ "nodes": m.nodes(), "n_features": m.n_features() })
            }
            TrainedClassifier::Forest(m) => serde_json::json!({
                "n_features": m.n_features,
                "tree_seeds": m.tree_seeds,
                "trees": m.trees,
            }),
            TrainedClassifier::Svm(m) => serde_json::json!({
                "support_vectors": m.support_vectors,
                "dual_coefs": m.dual_coefs,
                "support_indices": m.support_indices,
                "bias": m.bias,
                "w": m.w,
                "converged": m.converged,
                "n_features": m.n_features,
            }),
            TrainedClassifier::Gbt(m) => serde_json::json!({
                "n_features": m.n_features,
                "trees": m.trees,
            }),
        }
    }

    fn from_parts(
        family: ModelFamily,
        params: &serde_json::Value,
        payload: &serde_json::Value,
    ) -> Result<TrainedClassifier, ModelError> {
        let bad = |e: serde_json::Error| ModelError::Format(e.to_string());
        let field = |name: &str| -> Result<serde_json::Value, ModelError> {
            payload
                .get(name)
                .cloned()
                .ok_or_else(|| ModelError::Format(format!("payload missing {name:?}")))
        };
        match family {
            ModelFamily::Tree => {
                let params: TreeParams = serde_json::from_value(params.clone()).map_err(bad)?;
                let nodes: Vec<TreeNode> = serde_json::from_value(field("nodes")?).map_err(bad)?;
                let n_features: usize = serde_json::from_value(field("n_features")?).map_err(bad)?;
                Ok(TrainedClassifier::Tree(TreeModel::from_parts(params, nodes, n_features)?))
            }
            ModelFamily::Forest => {
                let params: ForestParams = serde_json::from_value(params.clone()).map_err(bad)?;
                let n_features: usize = serde_json::from_value(field("n_features")?).map_err(bad)?;
                let tree_seeds: Vec<u64> =
                    serde_json::from_value(field("tree_seeds")?).map_err(bad)?;
                let trees: Vec<TreeModel> = serde_json::from_value(field("trees")?).map_err(bad)?;
                if trees.is_empty() {
                    return Err(ModelError::Format("forest payload has no trees".into()));
                }
                Ok(TrainedClassifier::Forest(ForestModel {
                    params,
                    n_features,
                    tree_seeds,
                    trees,
                }))
            }
            ModelFamily::Svm => {
                let params: SvmParams = serde_json::from_value(params.clone()).map_err(bad)?;
                Ok(TrainedClassifier::Svm(SvmModel {
                    params,
                    support_vectors: serde_json::from_value(field("support_vectors")?)
                        .map_err(bad)?,
                    dual_coefs: serde_json::from_value(field("dual_coefs")?).map_err(bad)?,
                    support_indices: serde_json::from_value(field("support_indices")?)
                        .map_err(bad)?,
                    bias: serde_json::from_value(field("bias")?).map_err(bad)?,
                    w: serde_json::from_value(field("w")?).map_err(bad)?,
                    converged: serde_json::from_value(field("converged")?).map_err(bad)?,
                    n_features: serde_json::from_value(field("n_features")?).map_err(bad)?,
                }))
            }
            ModelFamily::Gbt => {
                let params: GbtParams = serde_json::from_value(params.clone()).map_err(bad)?;
                let n_features: usize = serde_json::from_value(field("n_features")?).map_err(bad)?;
                let trees: Vec<RegressionTree> =
                    serde_json::from_value(field("trees")?).map_err(bad)?;
                Ok(TrainedClassifier::Gbt(GbtModel { params, n_features, trees }))
            }
            other => Err(ModelError::UnsupportedFamily(other)),
        }
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk model document: format version, family tag, hyperparameters,
/// the vocabulary the model was fitted with, and the family-specific
/// payload. `provenance` carries run metadata (seed, config hash, tool
/// version, data digests) and is ignored by the loader's semantics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub family: ModelFamily,
    pub params: serde_json::Value,
    pub vocabulary: Vocabulary,
    pub payload: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl ModelFile {
    pub fn new(
        classifier: &TrainedClassifier,
        vocabulary: Vocabulary,
        provenance: Option<serde_json::Value>,
    ) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            family: classifier.family(),
            params: classifier.params_json(),
            vocabulary,
            payload: classifier.payload_json(),
            provenance,
        }
    }

    pub fn classifier(&self) -> Result<TrainedClassifier, ModelError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Format(format!(
                "unsupported format_version {} (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let model = TrainedClassifier::from_parts(self.family, &self.params, &self.payload)?;
        if model.n_features() != self.vocabulary.len() {
            return Err(ModelError::Format(format!(
                "model expects {} features but vocabulary has {} terms",
                model.n_features(),
                self.vocabulary.len()
            )));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes")
    }

    pub fn from_json(data: &str) -> Result<ModelFile, ModelError> {
        serde_json::from_str(data).map_err(|e| ModelError::Format(e.to_string()))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<ModelFile, ModelError> {
        ModelFile::from_json(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn check_training_inputs(
    x: &[SparseVector],
    n_labels: usize,
) -> Result<usize, ModelError> {
    if x.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if x.len() != n_labels {
        return Err(ModelError::MismatchedLengths { rows: x.len(), labels: n_labels });
    }
    let dim = x[0].dim();
    for v in x {
        if v.dim() != dim {
            return Err(ModelError::MixedDimensions(dim, v.dim()));
        }
    }
    if dim == 0 {
        return Err(ModelError::NoFeatures);
    }
    Ok(dim)
}
