//! Random forest: bagged CART trees with majority voting.
//!
//! Each tree gets its own seed derived from the forest seed and its
//! position, so trees can be fitted in parallel while the resulting model
//! stays byte-for-byte deterministic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{train_tree_rows, TreeModel, TreeParams};
use super::{check_training_inputs, ClassDistribution, ModelError};
use crate::corpus::Label;
use crate::features::SparseVector;
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    /// When true each tree trains on n rows drawn with replacement;
    /// when false every tree sees the full training set.
    pub bootstrap: bool,
    pub seed: u64,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> ForestParams {
        ForestParams {
            n_estimators: 100,
            bootstrap: true,
            seed: 0,
            tree: TreeParams {
                max_features: super::MaxFeatures::Sqrt,
                ..TreeParams::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub n_features: usize,
    pub tree_seeds: Vec<u64>,
    pub trees: Vec<TreeModel>,
}

impl ForestModel {
    pub fn predict(&self, x: &SparseVector) -> Label {
        self.votes(x).majority()
    }

    /// Fraction of trees voting for `label`.
    pub fn vote_fraction(&self, x: &SparseVector, label: Label) -> f64 {
        let votes = self.votes(x);
        votes.counts()[label.ordinal()] as f64 / votes.total() as f64
    }

    fn votes(&self, x: &SparseVector) -> ClassDistribution {
        let mut counts = [0usize; 2];
        for tree in &self.trees {
            counts[tree.predict(x).ordinal()] += 1;
        }
        ClassDistribution::new(counts)
    }
}

pub(crate) fn bootstrap_rows(n: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    (0..n).map(|_| rng.random_range(0..n) as u32).collect()
}

pub fn train_forest(
    x: &[SparseVector],
    y: &[Label],
    n_estimators: usize,
    tree_params: &TreeParams,
    bootstrap: bool,
    seed: u64,
) -> Result<ForestModel, ModelError> {
    let n_features = check_training_inputs(x, y.len())?;
    if n_estimators == 0 {
        return Err(ModelError::InvalidParams("n_estimators must be >= 1".into()));
    }
    tree_params.validate()?;
    let n = x.len();
    let tree_seeds: Vec<u64> = (0..n_estimators as u64)
        .map(|i| seeding::derive(seed, i, 0))
        .collect();
    let trees: Vec<TreeModel> = (0..n_estimators)
        .into_par_iter()
        .map(|i| {
            let rows: Vec<u32> = if bootstrap {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seeding::derive(seed, i as u64, 1));
                bootstrap_rows(n, &mut rng)
            } else {
                (0..n as u32).collect()
            };
            let params = TreeParams { seed: tree_seeds[i], ..*tree_params };
            train_tree_rows(x, y, rows, &params)
        })
        .collect::<Result<_, _>>()?;
    Ok(ForestModel {
        params: ForestParams {
            n_estimators,
            bootstrap,
            seed,
            tree: *tree_params,
        },
        n_features,
        tree_seeds,
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{train_tree, MaxFeatures};

    fn dense(values: &[f64]) -> SparseVector {
        SparseVector::from_dense(values)
    }

    fn random_data(seed: u64, n: usize, dim: usize) -> (Vec<SparseVector>, Vec<Label>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<SparseVector> = (0..n)
            .map(|_| {
                let vals: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
                dense(&vals)
            })
            .collect();
        let y: Vec<Label> = x
            .iter()
            .map(|v| {
                if v.get(0) + 0.5 * v.get(1) + 0.1 * rng.random::<f64>() > 0.75 {
                    Label::F41Anxiety
                } else {
                    Label::F43Adjustment
                }
            })
            .collect();
        (x, y)
    }

    #[test]
    fn single_unbagged_tree_equals_standalone_tree() {
        let (x, y) = random_data(3, 40, 5);
        let tree_params = TreeParams { max_features: MaxFeatures::All, ..TreeParams::default() };
        let forest = train_forest(&x, &y, 1, &tree_params, false, 11).unwrap();
        let solo = train_tree(
            &x,
            &y,
            &TreeParams { seed: forest.tree_seeds[0], ..tree_params },
        )
        .unwrap();
        assert_eq!(forest.trees[0].nodes(), solo.nodes());
        for v in &x {
            assert_eq!(forest.predict(v), solo.predict(v));
        }
    }

    #[test]
    fn deterministic_for_fixed_seed_and_sensitive_to_seed() {
        let (x, y) = random_data(5, 50, 6);
        let tp = TreeParams { max_features: MaxFeatures::Sqrt, ..TreeParams::default() };
        let a = train_forest(&x, &y, 15, &tp, true, 42).unwrap();
        let b = train_forest(&x, &y, 15, &tp, true, 42).unwrap();
        assert_eq!(a, b);
        let c = train_forest(&x, &y, 15, &tp, true, 43).unwrap();
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn parallel_training_preserves_tree_order() {
        // Same fit computed under a single-thread pool must match the
        // default pool: ordering comes from indices, not scheduling.
        let (x, y) = random_data(7, 40, 5);
        let tp = TreeParams { max_features: MaxFeatures::Sqrt, ..TreeParams::default() };
        let parallel = train_forest(&x, &y, 12, &tp, true, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| train_forest(&x, &y, 12, &tp, true, 9).unwrap());
        assert_eq!(parallel, serial);
    }

    #[test]
    fn bootstrap_distinct_fraction_near_632() {
        // A bootstrap of size n leaves out each row with probability
        // (1 - 1/n)^n -> 1/e, so ~63.2% of rows appear at least once.
        let n = 500;
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut total_distinct = 0usize;
        let reps = 200;
        for _ in 0..reps {
            let rows = bootstrap_rows(n, &mut rng);
            let mut seen = vec![false; n];
            for r in &rows {
                seen[*r as usize] = true;
            }
            total_distinct += seen.iter().filter(|s| **s).count();
        }
        let fraction = total_distinct as f64 / (n * reps) as f64;
        assert!(
            (fraction - 0.632).abs() < 0.01,
            "mean distinct fraction {fraction} not near 0.632"
        );
    }

    #[test]
    fn bootstrap_rows_stay_in_range_and_vary_per_tree() {
        let (x, y) = random_data(9, 30, 4);
        let forest = train_forest(&x, &y, 8, &TreeParams::default(), true, 21).unwrap();
        // trees trained on different resamples should rarely be identical
        let distinct: std::collections::HashSet<String> = forest
            .trees
            .iter()
            .map(|t| serde_json::to_string(t.nodes()).unwrap())
            .collect();
        assert!(distinct.len() > 1, "all bootstrap trees identical");
    }

    #[test]
    fn majority_vote_tie_goes_to_f41() {
        // Construct a forest by hand with an even split of constant trees.
        let (x, y) = random_data(13, 20, 3);
        let forest = train_forest(&x, &y, 2, &TreeParams::default(), true, 5).unwrap();
        // find a probe where trees disagree; if none, synthesize by checking
        // the tie rule on the voting distribution directly
        let probe = x
            .iter()
            .find(|v| forest.trees[0].predict(v) != forest.trees[1].predict(v));
        if let Some(p) = probe {
            assert_eq!(forest.predict(p), Label::F41Anxiety);
            assert_eq!(forest.vote_fraction(p, Label::F41Anxiety), 0.5);
        }
        assert_eq!(ClassDistribution::new([1, 1]).majority(), Label::F41Anxiety);
    }

    #[test]
    fn vote_fraction_matches_manual_count() {
        let (x, y) = random_data(15, 40, 4);
        let forest = train_forest(&x, &y, 9, &TreeParams::default(), true, 2).unwrap();
        for v in x.iter().take(10) {
            let manual = forest
                .trees
                .iter()
                .filter(|t| t.predict(v) == Label::F41Anxiety)
                .count() as f64
                / 9.0;
            assert_eq!(forest.vote_fraction(v, Label::F41Anxiety), manual);
            let f43 = forest.vote_fraction(v, Label::F43Adjustment);
            assert!((manual + f43 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn no_bootstrap_trees_differ_only_via_feature_sampling() {
        let (x, y) = random_data(17, 40, 12);
        let tp = TreeParams { max_features: MaxFeatures::All, ..TreeParams::default() };
        let forest = train_forest(&x, &y, 4, &tp, false, 3).unwrap();
        // all features, no bagging, best splitter: every tree identical
        for t in &forest.trees[1..] {
            assert_eq!(t.nodes(), forest.trees[0].nodes());
        }
    }

    #[test]
    fn rejects_zero_estimators() {
        let (x, y) = random_data(19, 10, 2);
        assert!(matches!(
            train_forest(&x, &y, 0, &TreeParams::default(), true, 0),
            Err(ModelError::InvalidParams(_))
        ));
    }
}
