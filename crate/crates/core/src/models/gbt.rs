//! Gradient boosted regression trees for binary targets.
//!
//! Boosting starts from a constant raw score and, each round, fits a
//! regression tree to the current gradient/hessian statistics. Split gain
//! is the second-order formula
//! `0.5 * (GL^2/(HL+L) + GR^2/(HR+L) - (GL+GR)^2/(HL+HR+L)) - gamma`
//! with `L` the leaf regularizer, and leaves take the Newton step
//! `-G/(H+L)`. Splits that gain nothing or leave a child below
//! `min_child_weight` hessian mass are rejected.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_training_inputs, ModelError};
use crate::features::SparseVector;
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GbtObjective {
    #[serde(rename = "binary:logistic")]
    Logistic,
    #[serde(rename = "binary:logitraw")]
    Logitraw,
    #[serde(rename = "binary:hinge")]
    Hinge,
}

impl std::str::FromStr for GbtObjective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary:logistic" => Ok(GbtObjective::Logistic),
            "binary:logitraw" => Ok(GbtObjective::Logitraw),
            "binary:hinge" => Ok(GbtObjective::Hinge),
            other => Err(format!("unknown objective {other:?}")),
        }
    }
}

impl std::fmt::Display for GbtObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GbtObjective::Logistic => "binary:logistic",
            GbtObjective::Logitraw => "binary:logitraw",
            GbtObjective::Hinge => "binary:hinge",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub objective: GbtObjective,
    pub learning_rate: f64,
    pub n_estimators: usize,
    /// Minimum hessian mass per child for a split to be allowed.
    pub min_child_weight: f64,
    /// Gain threshold subtracted from every split's gain.
    pub gamma: f64,
    /// Fraction of rows drawn (without replacement) per round.
    pub subsample: f64,
    /// Fraction of features drawn (without replacement) per tree.
    pub colsample_bytree: f64,
    pub max_depth: usize,
    /// L2 regularizer on leaf weights.
    pub lambda: f64,
    /// Initial raw score before any trees.
    pub base_raw: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> GbtParams {
        GbtParams {
            objective: GbtObjective::Logistic,
            learning_rate: 0.3,
            n_estimators: 100,
            min_child_weight: 1.0,
            gamma: 0.0,
            subsample: 1.0,
            colsample_bytree: 1.0,
            max_depth: 6,
            lambda: 1.0,
            base_raw: 0.0,
            seed: 0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidParams(msg.into()));
        if self.n_estimators == 0 {
            return bad("n_estimators must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return bad("colsample_bytree must be in (0, 1]");
        }
        if !(self.min_child_weight >= 0.0) {
            return bad("min_child_weight must be >= 0");
        }
        if !(self.gamma >= 0.0) {
            return bad("gamma must be >= 0");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be >= 0");
        }
        if !self.base_raw.is_finite() {
            return bad("base_raw must be finite");
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Gradient and hessian of the logistic loss with respect to the raw
/// score; the hessian is floored at 1e-16 to keep leaf weights finite.
pub fn logistic_grad_hess(raw: f64, y: f64) -> (f64, f64) {
    let p = sigmoid(raw);
    (p - y, (p * (1.0 - p)).max(1e-16))
}

/// Subgradient of the squared-margin-free hinge loss with unit hessian.
pub fn hinge_grad_hess(raw: f64, y: f64) -> (f64, f64) {
    let y_signed = 2.0 * y - 1.0;
    if y_signed * raw < 1.0 {
        (-y_signed, 1.0)
    } else {
        (0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegNode {
    Internal { feature: u32, threshold: f64, gain: f64, left: u32, right: u32 },
    Leaf { weight: f64, hessian_sum: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<RegNode>,
}

impl RegressionTree {
    pub fn predict_raw(&self, x: &SparseVector) -> f64 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                RegNode::Leaf { weight, .. } => return *weight,
                RegNode::Internal { feature, threshold, left, right, .. } => {
                    idx = if x.get(*feature) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, RegNode::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub params: GbtParams,
    pub n_features: usize,
    pub trees: Vec<RegressionTree>,
}

impl GbtModel {
    /// Raw score using only the first `k` trees.
    pub fn raw_prefix(&self, x: &SparseVector, k: usize) -> f64 {
        let mut raw = self.params.base_raw;
        for tree in &self.trees[..k] {
            raw += self.params.learning_rate * tree.predict_raw(x);
        }
        raw
    }

    pub fn raw_prediction(&self, x: &SparseVector) -> f64 {
        self.raw_prefix(x, self.trees.len())
    }

    /// (raw score, predicted class in {0, 1}).
    pub fn predict(&self, x: &SparseVector) -> (f64, u8) {
        let raw = self.raw_prediction(x);
        let one = match self.params.objective {
            GbtObjective::Logistic => sigmoid(raw) >= 0.5,
            GbtObjective::Logitraw | GbtObjective::Hinge => raw >= 0.0,
        };
        (raw, one as u8)
    }

    pub fn probability_from_raw(&self, raw: f64) -> Option<f64> {
        match self.params.objective {
            GbtObjective::Logistic | GbtObjective::Logitraw => Some(sigmoid(raw)),
            GbtObjective::Hinge => None,
        }
    }
}

struct GbtBuilder<'a> {
    x: &'a [SparseVector],
    grads: &'a [f64],
    hessians: &'a [f64],
    cols: &'a [u32],
    lambda: f64,
    gamma: f64,
    min_child_weight: f64,
    max_depth: usize,
    nodes: Vec<RegNode>,
}

impl GbtBuilder<'_> {
    fn sums(&self, rows: &[u32]) -> (f64, f64) {
        let mut g = 0.0;
        let mut h = 0.0;
        for &r in rows {
            g += self.grads[r as usize];
            h += self.hessians[r as usize];
        }
        (g, h)
    }

    fn push_leaf(&mut self, g: f64, h: f64) -> u32 {
        self.nodes.push(RegNode::Leaf { weight: -g / (h + self.lambda), hessian_sum: h });
        (self.nodes.len() - 1) as u32
    }

    fn leaf_score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.lambda)
    }

    fn build(&mut self, rows: Vec<u32>, depth: usize) -> u32 {
        let (g, h) = self.sums(&rows);
        if depth >= self.max_depth || rows.len() < 2 {
            return self.push_leaf(g, h);
        }
        let parent_score = self.leaf_score(g, h);
        let mut best: Option<(f64, u32, f64)> = None;
        for &feature in self.cols {
            let mut vals: Vec<(f64, u32)> = rows
                .iter()
                .map(|&r| (self.x[r as usize].get(feature), r))
                .collect();
            vals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));
            let mut gl = 0.0;
            let mut hl = 0.0;
            for i in 0..vals.len() - 1 {
                let r = vals[i].1 as usize;
                gl += self.grads[r];
                hl += self.hessians[r];
                if vals[i].0 < vals[i + 1].0 {
                    let (gr, hr) = (g - gl, h - hl);
                    if hl < self.min_child_weight || hr < self.min_child_weight {
                        continue;
                    }
                    let gain = 0.5
                        * (self.leaf_score(gl, hl) + self.leaf_score(gr, hr) - parent_score)
                        - self.gamma;
                    let threshold = (vals[i].0 + vals[i + 1].0) / 2.0;
                    let better = match &best {
                        None => gain > 0.0,
                        Some((bg, bf, bt)) => {
                            gain > *bg
                                || (gain == *bg && (feature, threshold) < (*bf, *bt))
                        }
                    };
                    if better && gain > 0.0 {
                        best = Some((gain, feature, threshold));
                    }
                }
            }
        }
        let Some((gain, feature, threshold)) = best else {
            return self.push_leaf(g, h);
        };
        let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
        for &r in &rows {
            if self.x[r as usize].get(feature) <= threshold {
                left_rows.push(r);
            } else {
                right_rows.push(r);
            }
        }
        let idx = self.nodes.len() as u32;
        self.nodes.push(RegNode::Internal { feature, threshold, gain, left: 0, right: 0 });
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        match &mut self.nodes[idx as usize] {
            RegNode::Internal { left: l, right: r, .. } => {
                *l = left;
                *r = right;
            }
            RegNode::Leaf { .. } => unreachable!(),
        }
        idx
    }
}

fn sample_fraction(rng: &mut ChaCha8Rng, total: usize, fraction: f64) -> Vec<u32> {
    if fraction >= 1.0 {
        return (0..total as u32).collect();
    }
    let k = ((fraction * total as f64).floor() as usize).max(1);
    let mut picked: Vec<u32> =
        rand::seq::index::sample(rng, total, k).iter().map(|i| i as u32).collect();
    picked.sort_unstable();
    picked
}

pub fn train_gbt(
    x: &[SparseVector],
    y: &[u8],
    params: &GbtParams,
) -> Result<GbtModel, ModelError> {
    let n_features = check_training_inputs(x, y.len())?;
    params.validate()?;
    for &label in y {
        if label > 1 {
            return Err(ModelError::InvalidParams(format!(
                "labels must be 0 or 1, got {label}"
            )));
        }
    }
    if !y.contains(&0) || !y.contains(&1) {
        return Err(ModelError::SingleClass);
    }
    let n = x.len();
    let mut raw = vec![params.base_raw; n];
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut grads = vec![0.0f64; n];
    let mut hessians = vec![0.0f64; n];
    for round in 0..params.n_estimators {
        for i in 0..n {
            let (g, h) = match params.objective {
                GbtObjective::Logistic | GbtObjective::Logitraw => {
                    logistic_grad_hess(raw[i], y[i] as f64)
                }
                GbtObjective::Hinge => hinge_grad_hess(raw[i], y[i] as f64),
            };
            grads[i] = g;
            hessians[i] = h;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(params.seed, round as u64, 0));
        let rows = sample_fraction(&mut rng, n, params.subsample);
        let cols = sample_fraction(&mut rng, n_features, params.colsample_bytree);
        let mut builder = GbtBuilder {
            x,
            grads: &grads,
            hessians: &hessians,
            cols: &cols,
            lambda: params.lambda,
            gamma: params.gamma,
            min_child_weight: params.min_child_weight,
            max_depth: params.max_depth,
            nodes: Vec::new(),
        };
        let root = builder.build(rows, 0);
        debug_assert_eq!(root, 0);
        let tree = RegressionTree { nodes: builder.nodes };
        for i in 0..n {
            raw[i] += params.learning_rate * tree.predict_raw(&x[i]);
        }
        trees.push(tree);
    }
    Ok(GbtModel { params: *params, n_features, trees })
}
