use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{TreeBuilder, TreeKind, TreeModel, TreeParams};
use super::{check_binary, check_dims, Classifier};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    /// Fraction of columns drawn for each tree.
    pub feature_subsample: f64,
    pub seed: u64,
}

impl Default for RandomForestParams {
    fn default() -> Self {
        RandomForestParams {
            n_trees: 100,
            max_depth: 12,
            min_samples_leaf: 5,
            bootstrap: true,
            feature_subsample: 0.7,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: RandomForestParams,
    pub feature_count: usize,
    pub trees: Vec<TreeModel>,
}

impl Classifier for RandomForest {
    fn n_features(&self) -> usize {
        self.feature_count
    }

    fn predict_proba_row(&self, x: &[f64]) -> Result<f64> {
        check_dims(self.feature_count, x)?;
        let sum: f64 = self.trees.iter().map(|t| t.leaf_value(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }
}

pub fn fit_random_forest(
    x: &FeatureMatrix,
    y: &[u8],
    params: RandomForestParams,
) -> Result<RandomForest> {
    if params.n_trees == 0 {
        return Err(Error::InvalidInput("n_trees must be at least 1".into()));
    }
    if !(params.feature_subsample > 0.0 && params.feature_subsample <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "feature_subsample {} not in (0, 1]",
            params.feature_subsample
        )));
    }
    if params.max_depth == 0 {
        return Err(Error::InvalidInput("max_depth must be at least 1".into()));
    }
    if x.n_rows == 0 {
        return Err(Error::Empty("forest training rows"));
    }
    if y.len() != x.n_rows {
        return Err(Error::LengthMismatch {
            left: x.n_rows,
            right: y.len(),
        });
    }
    check_binary(y)?;
    let n = x.n_rows;
    let d = x.n_cols;
    let n_feat = ((params.feature_subsample * d as f64).ceil() as usize).clamp(1, d.max(1));
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    };

    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut features: Vec<usize> = if n_feat == d {
                (0..d).collect()
            } else {
                sample(&mut rng, d, n_feat).into_vec()
            };
            features.sort_unstable();
            TreeBuilder::classification(x, y, &rows, &features, tree_params)
                .build(TreeKind::ClassificationGini)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomForest {
        params,
        feature_count: d,
        trees,
    })
}
