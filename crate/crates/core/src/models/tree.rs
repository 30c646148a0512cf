//! CART-style binary decision tree.
//!
//! Splits are axis-aligned thresholds at midpoints between consecutive
//! distinct feature values; rows with `value <= threshold` go left. The
//! `best` splitter maximizes impurity decrease, breaking exact ties toward
//! the lowest feature index and then the lowest threshold, which makes the
//! fit invariant to training-row order. The `random` splitter draws one
//! uniform threshold per candidate feature and keeps the best of those.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_training_inputs, ClassDistribution, Criterion, ModelError};
use crate::corpus::Label;
use crate::features::SparseVector;

/// How many features each node considers, out of `n_features`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// floor(sqrt(n_features)), at least 1.
    Sqrt,
    /// floor(log2(n_features)), at least 1.
    Log2,
    /// All features.
    All,
}

impl MaxFeatures {
    pub fn count(self, n_features: usize) -> usize {
        let m = match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::Log2 => (n_features as f64).log2().floor() as usize,
            MaxFeatures::All => n_features,
        };
        m.clamp(1, n_features)
    }
}

impl std::str::FromStr for MaxFeatures {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sqrt" => Ok(MaxFeatures::Sqrt),
            "log2" => Ok(MaxFeatures::Log2),
            "all" => Ok(MaxFeatures::All),
            other => Err(format!("unknown max_features {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitter {
    Best,
    Random,
}

impl std::str::FromStr for Splitter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "best" => Ok(Splitter::Best),
            "random" => Ok(Splitter::Random),
            other => Err(format!("unknown splitter {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub splitter: Splitter,
    /// None means unlimited depth; the root is at depth 0.
    pub max_depth: Option<u32>,
    /// Nodes with fewer samples become leaves. Values below 2 are clamped
    /// to 2 with a logged warning.
    pub min_samples_split: usize,
    /// Splits leaving fewer samples on either side are rejected.
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> TreeParams {
        TreeParams {
            criterion: Criterion::Gini,
            splitter: Splitter::Best,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
            seed: 0,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.max_depth == Some(0) {
            return Err(ModelError::InvalidParams("max_depth must be >= 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(ModelError::InvalidParams("min_samples_leaf must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Internal { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { label: Label, probabilities: [f64; 2], samples: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub params: TreeParams,
    nodes: Vec<TreeNode>,
    n_features: usize,
}

impl TreeModel {
    pub(crate) fn from_parts(
        params: TreeParams,
        nodes: Vec<TreeNode>,
        n_features: usize,
    ) -> Result<TreeModel, ModelError> {
        if nodes.is_empty() {
            return Err(ModelError::Format("tree has no nodes".into()));
        }
        for node in &nodes {
            if let TreeNode::Internal { feature, left, right, .. } = node {
                if *left as usize >= nodes.len() || *right as usize >= nodes.len() {
                    return Err(ModelError::Format("tree child index out of range".into()));
                }
                if *feature as usize >= n_features {
                    return Err(ModelError::Format("tree split feature out of range".into()));
                }
            }
        }
        Ok(TreeModel { params, nodes, n_features })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Feature-space width the tree was trained on.
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn depth(&self) -> u32 {
        fn walk(nodes: &[TreeNode], idx: usize) -> u32 {
            match &nodes[idx] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    fn leaf_for(&self, x: &SparseVector) -> &TreeNode {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                leaf @ TreeNode::Leaf { .. } => return leaf,
                TreeNode::Internal { feature, threshold, left, right } => {
                    idx = if x.get(*feature) <= *threshold { *left as usize } else { *right as usize };
                }
            }
        }
    }

    pub fn predict(&self, x: &SparseVector) -> Label {
        match self.leaf_for(x) {
            TreeNode::Leaf { label, .. } => *label,
            TreeNode::Internal { .. } => unreachable!(),
        }
    }

    pub fn predict_proba(&self, x: &SparseVector) -> [f64; 2] {
        match self.leaf_for(x) {
            TreeNode::Leaf { probabilities, .. } => *probabilities,
            TreeNode::Internal { .. } => unreachable!(),
        }
    }
}

/// Impurity used for split scoring. Entropy scores with the nat-scaled
/// value so entropy and log_loss pick identical splits by construction.
fn split_impurity(dist: &ClassDistribution, criterion: Criterion) -> f64 {
    match criterion {
        Criterion::Gini => dist.gini(),
        Criterion::Entropy | Criterion::LogLoss => dist.nat_entropy(),
    }
}

struct Candidate {
    gain: f64,
    feature: u32,
    threshold: f64,
}

impl Candidate {
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(b) => {
                self.gain > b.gain
                    || (self.gain == b.gain
                        && (self.feature, self.threshold) < (b.feature, b.threshold))
            }
        }
    }
}

struct TreeBuilder<'a> {
    x: &'a [SparseVector],
    y: &'a [Label],
    n_features: usize,
    criterion: Criterion,
    splitter: Splitter,
    max_depth: Option<u32>,
    min_samples_split: usize,
    min_samples_leaf: usize,
    n_candidate_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    fn tally(&self, rows: &[u32]) -> ClassDistribution {
        ClassDistribution::from_labels(rows.iter().map(|&r| &self.y[r as usize]))
    }

    fn push_leaf(&mut self, dist: ClassDistribution) -> u32 {
        let total = dist.total();
        let counts = dist.counts();
        self.nodes.push(TreeNode::Leaf {
            label: dist.majority(),
            probabilities: [counts[0] as f64 / total as f64, counts[1] as f64 / total as f64],
            samples: total as u32,
        });
        (self.nodes.len() - 1) as u32
    }

    /// Features a node considers: a seeded draw without replacement when
    /// fewer than all are allowed, returned in ascending order.
    fn candidate_features(&mut self) -> Vec<u32> {
        if self.n_candidate_features >= self.n_features {
            (0..self.n_features as u32).collect()
        } else {
            let mut picked: Vec<u32> = rand::seq::index::sample(
                &mut self.rng,
                self.n_features,
                self.n_candidate_features,
            )
            .iter()
            .map(|i| i as u32)
            .collect();
            picked.sort_unstable();
            picked
        }
    }

    fn best_threshold_for_feature(
        &self,
        rows: &[u32],
        feature: u32,
        parent_impurity: f64,
    ) -> Option<Candidate> {
        let mut vals: Vec<(f64, usize)> = rows
            .iter()
            .map(|&r| (self.x[r as usize].get(feature), self.y[r as usize].ordinal()))
            .collect();
        vals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));
        let n = vals.len();
        let total = {
            let mut c = [0usize; 2];
            for &(_, ord) in &vals {
                c[ord] += 1;
            }
            c
        };
        let mut left = [0usize; 2];
        let mut best: Option<Candidate> = None;
        for i in 0..n - 1 {
            left[vals[i].1] += 1;
            if vals[i].0 < vals[i + 1].0 {
                let n_left = i + 1;
                let n_right = n - n_left;
                if n_left < self.min_samples_leaf || n_right < self.min_samples_leaf {
                    continue;
                }
                let threshold = (vals[i].0 + vals[i + 1].0) / 2.0;
                let right = [total[0] - left[0], total[1] - left[1]];
                let gain = self.weighted_gain(parent_impurity, left, right);
                let candidate = Candidate { gain, feature, threshold };
                if candidate.beats(&best) {
                    best = Some(candidate);
                }
            }
        }
        best
    }

    fn random_threshold_for_feature(
        &mut self,
        rows: &[u32],
        feature: u32,
        parent_impurity: f64,
    ) -> Option<Candidate> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &r in rows {
            let v = self.x[r as usize].get(feature);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(lo < hi) {
            return None;
        }
        let mut threshold = lo + self.rng.random::<f64>() * (hi - lo);
        if threshold >= hi {
            threshold = lo;
        }
        let mut left = [0usize; 2];
        let mut right = [0usize; 2];
        for &r in rows {
            let side = if self.x[r as usize].get(feature) <= threshold { &mut left } else { &mut right };
            side[self.y[r as usize].ordinal()] += 1;
        }
        let n_left = left[0] + left[1];
        let n_right = right[0] + right[1];
        if n_left < self.min_samples_leaf || n_right < self.min_samples_leaf {
            return None;
        }
        let gain = self.weighted_gain(parent_impurity, left, right);
        Some(Candidate { gain, feature, threshold })
    }

    fn weighted_gain(&self, parent_impurity: f64, left: [usize; 2], right: [usize; 2]) -> f64 {
        let n_left = (left[0] + left[1]) as f64;
        let n_right = (right[0] + right[1]) as f64;
        let n = n_left + n_right;
        let imp_left = split_impurity(&ClassDistribution::new(left), self.criterion);
        let imp_right = split_impurity(&ClassDistribution::new(right), self.criterion);
        parent_impurity - (n_left * imp_left + n_right * imp_right) / n
    }

    fn build(&mut self, rows: Vec<u32>, depth: u32) -> u32 {
        let dist = self.tally(&rows);
        let stop = dist.is_pure()
            || rows.len() < self.min_samples_split
            || self.max_depth.is_some_and(|d| depth >= d);
        if stop {
            return self.push_leaf(dist);
        }
        let parent_impurity = split_impurity(&dist, self.criterion);
        let candidates = self.candidate_features();
        let mut best: Option<Candidate> = None;
        for feature in candidates {
            let found = match self.splitter {
                Splitter::Best => self.best_threshold_for_feature(&rows, feature, parent_impurity),
                Splitter::Random => {
                    self.random_threshold_for_feature(&rows, feature, parent_impurity)
                }
            };
            if let Some(c) = found {
                if c.beats(&best) {
                    best = Some(c);
                }
            }
        }
        let Some(split) = best.filter(|c| c.gain > 0.0) else {
            return self.push_leaf(dist);
        };
        let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
        for &r in &rows {
            if self.x[r as usize].get(split.feature) <= split.threshold {
                left_rows.push(r);
            } else {
                right_rows.push(r);
            }
        }
        let idx = self.nodes.len() as u32;
        self.nodes.push(TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left: 0,
            right: 0,
        });
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        match &mut self.nodes[idx as usize] {
            TreeNode::Internal { left: l, right: r, .. } => {
                *l = left;
                *r = right;
            }
            TreeNode::Leaf { .. } => unreachable!(),
        }
        idx
    }
}

pub fn train_tree(
    x: &[SparseVector],
    y: &[Label],
    params: &TreeParams,
) -> Result<TreeModel, ModelError> {
    let rows: Vec<u32> = (0..x.len() as u32).collect();
    train_tree_rows(x, y, rows, params)
}

/// Train on an explicit multiset of row indices (used for bootstrap
/// resamples inside forests).
pub(crate) fn train_tree_rows(
    x: &[SparseVector],
    y: &[Label],
    rows: Vec<u32>,
    params: &TreeParams,
) -> Result<TreeModel, ModelError> {
    let n_features = check_training_inputs(x, y.len())?;
    params.validate()?;
    if rows.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let min_samples_split = if params.min_samples_split < 2 {
        log::warn!(
            "min_samples_split={} is below 2; clamping to 2",
            params.min_samples_split
        );
        2
    } else {
        params.min_samples_split
    };
    let mut builder = TreeBuilder {
        x,
        y,
        n_features,
        criterion: params.criterion,
        splitter: params.splitter,
        max_depth: params.max_depth,
        min_samples_split,
        min_samples_leaf: params.min_samples_leaf,
        n_candidate_features: params.max_features.count(n_features),
        rng: ChaCha8Rng::seed_from_u64(params.seed),
        nodes: Vec::new(),
    };
    let root = builder.build(rows, 0);
    debug_assert_eq!(root, 0);
    Ok(TreeModel { params: *params, nodes: builder.nodes, n_features })
}
