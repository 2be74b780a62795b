//! Second-order gradient boosting with logistic loss.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::learners::{
    check_binary, check_dims, Classifier, RegressionTreeParams, TreeBuilder, TreeKind, TreeModel,
};
use crate::math::{logit, mean_log_loss, sigmoid};

pub const GBDT_FORMAT_VERSION: u32 = 1;

/// Accepted rounds may raise the training loss by at most this much.
pub const LOSS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub reg_alpha: f64,
    pub reg_lambda: f64,
    #[serde(default = "default_min_child_weight")]
    pub min_child_weight: f64,
    /// Initial log-odds; `None` uses the logit of the training positive rate.
    #[serde(default)]
    pub base_score: Option<f64>,
    pub seed: u64,
}

fn default_min_child_weight() -> f64 {
    1.0
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_estimators: 100,
            learning_rate: 0.1,
            max_depth: 8,
            subsample: 0.8,
            colsample_bytree: 0.8,
            reg_alpha: 0.1,
            reg_lambda: 1.0,
            min_child_weight: 1.0,
            base_score: None,
            seed: 42,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v <= 1.0;
        if !in_unit(self.learning_rate)
            || !in_unit(self.subsample)
            || !in_unit(self.colsample_bytree)
        {
            return Err(Error::InvalidInput(
                "learning_rate, subsample and colsample_bytree must be in (0, 1]".into(),
            ));
        }
        if self.max_depth == 0 {
            return Err(Error::InvalidInput("max_depth must be at least 1".into()));
        }
        if self.reg_alpha < 0.0 || self.reg_lambda < 0.0 || self.min_child_weight < 0.0 {
            return Err(Error::InvalidInput(
                "regularizers must be non-negative".into(),
            ));
        }
        if self.base_score.is_some_and(|b| !b.is_finite()) {
            return Err(Error::InvalidInput("base_score must be finite".into()));
        }
        Ok(())
    }

    fn tree_params(&self) -> RegressionTreeParams {
        RegressionTreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: 1,
            lambda: self.reg_lambda,
            alpha: self.reg_alpha,
            min_child_weight: self.min_child_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub format: String,
    pub version: u32,
    pub config: GbdtConfig,
    pub base_score: f64,
    pub feature_count: usize,
    #[serde(default)]
    pub schema_fingerprint: Option<String>,
    pub trees: Vec<TreeModel>,
    /// Mean training log loss before boosting, then after each accepted tree.
    pub loss_trace: Vec<f64>,
    /// Rounds whose tree was discarded for raising the training loss.
    pub rejected_rounds: Vec<usize>,
}

impl GbdtModel {
    pub fn new(
        config: GbdtConfig,
        base_score: f64,
        feature_count: usize,
        trees: Vec<TreeModel>,
    ) -> GbdtModel {
        GbdtModel {
            format: "gbdt".into(),
            version: GBDT_FORMAT_VERSION,
            config,
            base_score,
            feature_count,
            schema_fingerprint: None,
            trees,
            loss_trace: Vec::new(),
            rejected_rounds: Vec::new(),
        }
    }

    pub fn with_schema(mut self, fingerprint: impl Into<String>) -> GbdtModel {
        self.schema_fingerprint = Some(fingerprint.into());
        self
    }

    pub fn check_schema(&self, fingerprint: &str) -> Result<()> {
        match &self.schema_fingerprint {
            Some(fp) if fp != fingerprint => Err(Error::SchemaMismatch {
                expected: fp.clone(),
                got: fingerprint.to_string(),
            }),
            _ => Ok(()),
        }
    }

    fn margin_unchecked(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.leaf_value(x)).sum();
        self.base_score + self.config.learning_rate * sum
    }

    pub fn predict_margin(&self, x: &[f64]) -> Result<f64> {
        check_dims(self.feature_count, x)?;
        Ok(self.margin_unchecked(x))
    }

    pub fn predict_margins(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        if m.n_cols != self.feature_count {
            return Err(Error::DimensionMismatch {
                expected: self.feature_count,
                got: m.n_cols,
            });
        }
        Ok((0..m.n_rows)
            .into_par_iter()
            .map(|i| self.margin_unchecked(m.row(i)))
            .collect())
    }
}

impl Classifier for GbdtModel {
    fn n_features(&self) -> usize {
        self.feature_count
    }

    fn predict_proba_row(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.predict_margin(x)?))
    }

    fn predict_proba(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(self.predict_margins(m)?.into_iter().map(sigmoid).collect())
    }
}

pub fn gradient_hessian(margin: f64, label: u8) -> (f64, f64) {
    let p = sigmoid(margin);
    (p - label as f64, p * (1.0 - p))
}

pub fn fit_gbdt(x: &FeatureMatrix, y: &[u8], config: GbdtConfig) -> Result<GbdtModel> {
    config.validate()?;
    if x.n_rows == 0 {
        return Err(Error::Empty("boosting rows"));
    }
    if y.len() != x.n_rows {
        return Err(Error::LengthMismatch {
            left: x.n_rows,
            right: y.len(),
        });
    }
    check_binary(y)?;
    if let Some(i) = x.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: i / x.n_cols.max(1),
            column: x
                .column_names
                .get(i % x.n_cols.max(1))
                .cloned()
                .unwrap_or_default(),
        });
    }
    let n = x.n_rows;
    let d = x.n_cols;
    let positives = y.iter().filter(|&&v| v == 1).count();
    let rate = positives as f64 / n as f64;
    let base = config.base_score.unwrap_or_else(|| logit(rate));
    let mut model = GbdtModel::new(config, base, d, Vec::new());
    let mut margins = vec![base; n];
    let mut loss = mean_log_loss(&margins, y);
    model.loss_trace.push(loss);
    if positives == 0 || positives == n {
        log::warn!(
            "all training labels are {}; boosting keeps only the base score",
            y[0]
        );
        return Ok(model);
    }

    let n_rows = ((config.subsample * n as f64).round() as usize).clamp(1, n);
    let n_cols = ((config.colsample_bytree * d as f64).round() as usize).clamp(1, d.max(1));
    let params = config.tree_params();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut grads = vec![0.0; n];
    let mut hess = vec![0.0; n];

    for round in 0..config.n_estimators {
        for i in 0..n {
            let (g, h) = gradient_hessian(margins[i], y[i]);
            grads[i] = g;
            hess[i] = h.max(1e-16);
        }
        let mut rows = if n_rows == n {
            (0..n).collect()
        } else {
            sample(&mut rng, n, n_rows).into_vec()
        };
        rows.sort_unstable();
        let mut features = if n_cols == d {
            (0..d).collect()
        } else {
            sample(&mut rng, d, n_cols).into_vec()
        };
        features.sort_unstable();
        let tree = TreeBuilder::regression(x, &grads, &hess, &rows, &features, params)
            .build(TreeKind::Regression)?;
        let candidate: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| margins[i] + config.learning_rate * tree.leaf_value(x.row(i)))
            .collect();
        let new_loss = mean_log_loss(&candidate, y);
        if !new_loss.is_finite() {
            return Err(Error::NonFiniteLoss(format!(
                "training loss became {new_loss} at round {round}"
            )));
        }
        if new_loss > loss + LOSS_TOLERANCE {
            log::debug!("round {round}: tree discarded, loss {loss} -> {new_loss}");
            model.rejected_rounds.push(round);
            continue;
        }
        margins = candidate;
        loss = new_loss;
        model.loss_trace.push(loss);
        model.trees.push(tree);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::TreeNode;

    fn separable() -> FeatureMatrix {
        FeatureMatrix::from_rows(
            vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            vec![0, 0, 1, 1],
        )
        .unwrap()
    }

    #[test]
    fn balanced_base_score_is_zero() {
        let x = separable();
        let m = fit_gbdt(
            &x,
            &x.labels,
            GbdtConfig {
                n_estimators: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(m.base_score, 0.0);
        assert_eq!(m.predict_proba_row(&[1.0]).unwrap(), 0.5);
    }

    #[test]
    fn gradient_hessian_at_half() {
        assert_eq!(gradient_hessian(0.0, 1), (-0.5, 0.25));
    }

    #[test]
    fn one_round_reduces_loss_by_hand_formula() {
        let x = separable();
        let cfg = GbdtConfig {
            n_estimators: 1,
            subsample: 1.0,
            colsample_bytree: 1.0,
            reg_alpha: 0.0,
            min_child_weight: 0.0,
            ..Default::default()
        };
        let m = fit_gbdt(&x, &x.labels, cfg).unwrap();
        // Each side has G = ±1, H = 0.5, leaf = ∓1/1.5.
        let leaf = 1.0 / 1.5;
        let after = crate::math::logistic_loss(0.1 * leaf, 1.0);
        assert!((m.loss_trace[0] - 2f64.ln()).abs() < 1e-15);
        assert!((m.loss_trace[1] - after).abs() < 1e-12);
        assert!(m.loss_trace[1] < m.loss_trace[0]);
    }

    #[test]
    fn single_leaf_tree_formula() {
        let tree = TreeModel {
            kind: TreeKind::Regression,
            feature_count: 1,
            depth: 0,
            leaf_count: 1,
            root: TreeNode::Leaf {
                value: 2.0,
                count: 1,
            },
        };
        let m = GbdtModel::new(GbdtConfig::default(), 0.3, 1, vec![tree]);
        assert!((m.predict_proba_row(&[5.0]).unwrap() - sigmoid(0.3 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn single_class_degenerates_to_base_score() {
        let x = separable();
        let m = fit_gbdt(&x, &[1, 1, 1, 1], GbdtConfig::default()).unwrap();
        assert!(m.trees.is_empty());
    }

    #[test]
    fn schema_fingerprint_mismatch() {
        let m = GbdtModel::new(GbdtConfig::default(), 0.0, 1, vec![]).with_schema("abc");
        assert!(m.check_schema("abc").is_ok());
        assert!(matches!(
            m.check_schema("xyz"),
            Err(Error::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        let x = separable();
        assert!(fit_gbdt(
            &x,
            &x.labels,
            GbdtConfig {
                learning_rate: 0.0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(fit_gbdt(
            &x,
            &x.labels,
            GbdtConfig {
                max_depth: 0,
                ..Default::default()
            }
        )
        .is_err());
    }
}
