//! Baseline learners sharing one probability contract. The tree builder is
//! also the weak learner inside [`crate::gbdt`].

mod forest;
mod knn;
mod logreg;
mod tree;

pub use forest::{fit_random_forest, RandomForest, RandomForestParams};
pub use knn::{KnnModel, KnnWeighting};
pub use logreg::{fit_logreg, logreg_loss_and_gradient, LogRegFit, LogRegModel, LogRegParams};
pub use tree::{
    fit_classification_tree, fit_regression_tree, soft_threshold, RegressionTreeParams,
    TreeBuilder, TreeKind, TreeModel, TreeNode, TreeParams,
};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Anything that maps a feature row to P(label = 1).
pub trait Classifier: Send + Sync {
    fn n_features(&self) -> usize;

    fn predict_proba_row(&self, x: &[f64]) -> Result<f64>;

    fn predict_proba(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        m.rows().map(|r| self.predict_proba_row(r)).collect()
    }

    fn predict(&self, m: &FeatureMatrix) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba(m)?
            .into_iter()
            .map(|p| u8::from(p >= 0.5))
            .collect())
    }
}

pub(crate) fn check_dims(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_binary(y: &[u8]) -> Result<()> {
    match y.iter().position(|&v| v > 1) {
        Some(i) => Err(Error::InvalidInput(format!(
            "label {} at row {i} is not binary",
            y[i]
        ))),
        None => Ok(()),
    }
}
