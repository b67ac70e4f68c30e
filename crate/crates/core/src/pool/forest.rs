//! Random forest: CART trees on bootstrap samples, averaged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, RegressionTree, SortedColumns, TreeParams};
use crate::dataio::FeatureMatrix;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means `ceil(d / 3)`.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            max_features: None,
            min_samples_leaf: 1,
            max_depth: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest<T> {
    pub trees: Vec<RegressionTree<T>>,
}

impl<T: Real> RandomForest<T> {
    pub fn predict_row(&self, x: &[T]) -> T {
        let s: T = self.trees.iter().map(|t| t.predict_row(x)).sum();
        s / T::of_usize(self.trees.len().max(1))
    }
}

pub fn fit_forest<T: Real>(
    train: &FeatureMatrix<T>,
    params: &ForestParams,
    seed: u64,
) -> Result<RandomForest<T>> {
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidConfig("forest needs at least one tree".into()));
    }
    let n = train.n_rows();
    let d = train.n_cols();
    let data = SortedColumns::new(train.rows(), d);
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: Some(params.max_features.unwrap_or(d.div_ceil(3)).clamp(1, d.max(1))),
    };
    let trees = (0..params.n_trees)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let slots: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let y: Vec<T> = slots.iter().map(|&r| train.targets[r]).collect();
            grow_tree(&data, &slots, &y, tree_params, &mut rng).tree
        })
        .collect();
    Ok(RandomForest { trees })
}
