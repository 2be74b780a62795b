//! Per-prediction path attributions and global permutation importance.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::gbdt::GbdtModel;
use crate::learners::{Classifier, TreeNode};
use crate::math::logistic_loss;
use crate::metrics::roc_auc;

/// Margin-unit contributions. `base_value + Σ contributions = prediction_margin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub base_value: f64,
    pub contributions: Vec<f64>,
    pub prediction_margin: f64,
}

impl Attribution {
    /// `(feature, contribution)` for the `k` largest magnitudes; ties keep the lower feature.
    pub fn top_k(&self, k: usize) -> Vec<(usize, f64)> {
        let mut idx: Vec<usize> = (0..self.contributions.len()).collect();
        idx.sort_by(|&a, &b| {
            self.contributions[b]
                .abs()
                .total_cmp(&self.contributions[a].abs())
                .then(a.cmp(&b))
        });
        idx.into_iter()
            .take(k)
            .map(|i| (i, self.contributions[i]))
            .collect()
    }
}

/// Walk each tree's realized path and credit every change in expected value to
/// the split feature that caused it.
pub fn attribute_path(model: &GbdtModel, x: &[f64]) -> Result<Attribution> {
    let margin = model.predict_margin(x)?;
    let lr = model.config.learning_rate;
    let mut contributions = vec![0.0; model.feature_count];
    let mut root_sum = 0.0;
    for tree in &model.trees {
        root_sum += tree.root.expected();
        let mut node = &tree.root;
        while let TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
            expected,
            ..
        } = node
        {
            let child = if x[*feature] <= *threshold {
                left
            } else {
                right
            };
            contributions[*feature] += child.expected() - expected;
            node = child;
        }
    }
    contributions.iter_mut().for_each(|c| *c *= lr);
    Ok(Attribution {
        base_value: model.base_score + lr * root_sum,
        contributions,
        prediction_margin: margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMetric {
    Accuracy,
    RocAuc,
    /// Negative mean log loss, so that higher is better like the others.
    NegLogLoss,
}

impl ImportanceMetric {
    fn score(self, probs: &[f64], labels: &[u8]) -> f64 {
        match self {
            ImportanceMetric::Accuracy => {
                probs
                    .iter()
                    .zip(labels)
                    .filter(|(&p, &y)| u8::from(p >= 0.5) == y)
                    .count() as f64
                    / labels.len() as f64
            }
            ImportanceMetric::RocAuc => roc_auc(probs, labels).unwrap_or(0.5),
            ImportanceMetric::NegLogLoss => {
                let eps = 1e-15;
                -probs
                    .iter()
                    .zip(labels)
                    .map(|(&p, &y)| {
                        let p = p.clamp(eps, 1.0 - eps);
                        logistic_loss((p / (1.0 - p)).ln(), y as f64)
                    })
                    .sum::<f64>()
                    / labels.len() as f64
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: usize,
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

/// Drop in `metric` when one column is shuffled, averaged over `n_repeats`.
pub fn permutation_importance<C: Classifier + ?Sized>(
    model: &C,
    x: &FeatureMatrix,
    metric: ImportanceMetric,
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<FeatureImportance>> {
    if n_repeats == 0 {
        return Err(Error::InvalidInput("n_repeats must be at least 1".into()));
    }
    if x.n_rows == 0 {
        return Err(Error::Empty("importance rows"));
    }
    let base = metric.score(&model.predict_proba(x)?, &x.labels);
    (0..x.n_cols)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let mut work = x.clone();
            let original = x.column(j);
            let mut drops = Vec::with_capacity(n_repeats);
            for _ in 0..n_repeats {
                let mut col = original.clone();
                col.shuffle(&mut rng);
                for (i, v) in col.into_iter().enumerate() {
                    work.data[i * x.n_cols + j] = v;
                }
                drops.push(base - metric.score(&model.predict_proba(&work)?, &x.labels));
            }
            let mean = drops.iter().sum::<f64>() / n_repeats as f64;
            let var = drops.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n_repeats as f64;
            Ok(FeatureImportance {
                feature: j,
                name: x
                    .column_names
                    .get(j)
                    .cloned()
                    .unwrap_or_else(|| format!("f{j}")),
                mean,
                std: var.sqrt(),
            })
        })
        .collect()
}

/// Mean absolute path attribution per feature over the rows of `x`.
pub fn mean_abs_attribution(model: &GbdtModel, x: &FeatureMatrix) -> Result<Vec<f64>> {
    let per_row = (0..x.n_rows)
        .into_par_iter()
        .map(|i| attribute_path(model, x.row(i)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![0.0; x.n_cols];
    for a in &per_row {
        for (o, c) in out.iter_mut().zip(&a.contributions) {
            *o += c.abs();
        }
    }
    out.iter_mut().for_each(|o| *o /= x.n_rows.max(1) as f64);
    Ok(out)
}
