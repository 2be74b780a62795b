use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn from_predictions(labels: &[u8], predictions: &[u8]) -> Result<ConfusionMatrix> {
        if labels.len() != predictions.len() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: predictions.len(),
            });
        }
        let mut c = ConfusionMatrix::default();
        for (&y, &p) in labels.iter().zip(predictions) {
            match (y, p) {
                (1, 1) => c.tp += 1,
                (0, 1) => c.fp += 1,
                (0, 0) => c.tn += 1,
                (1, 0) => c.fn_ += 1,
                _ => return Err(Error::InvalidInput(format!("non-binary pair ({y}, {p})"))),
            }
        }
        Ok(c)
    }

    pub fn n(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.n() as f64
    }

    /// Precision, recall and F1 treating `class` as positive. Empty denominators give 0.
    pub fn class_metrics(&self, class: u8) -> ClassMetrics {
        let (tp, fp, fn_, support) = if class == 1 {
            (self.tp, self.fp, self.fn_, self.tp + self.fn_)
        } else {
            (self.tn, self.fn_, self.fp, self.tn + self.fp)
        };
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub n: usize,
    pub accuracy: f64,
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub macro_avg: AveragedMetrics,
    pub weighted_avg: AveragedMetrics,
    pub roc_auc: Option<f64>,
    pub confusion: ConfusionMatrix,
}

impl ClassificationReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:>9} {:>9} {:>9} {:>9}",
            "", "precision", "recall", "f1", "support"
        );
        for (k, m) in &self.per_class {
            let _ = writeln!(
                s,
                "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>9}",
                k, m.precision, m.recall, m.f1, m.support
            );
        }
        for (name, m) in [("macro", &self.macro_avg), ("weighted", &self.weighted_avg)] {
            let _ = writeln!(
                s,
                "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>9}",
                name, m.precision, m.recall, m.f1, self.n
            );
        }
        let _ = writeln!(s, "{:<10} {:>9.4}", "accuracy", self.accuracy);
        match self.roc_auc {
            Some(a) => {
                let _ = writeln!(s, "{:<10} {:>9.4}", "roc_auc", a);
            }
            None => {
                let _ = writeln!(s, "{:<10} {:>9}", "roc_auc", "n/a");
            }
        }
        let c = &self.confusion;
        let _ = writeln!(
            s,
            "confusion  tp={} fp={} tn={} fn={}",
            c.tp, c.fp, c.tn, c.fn_
        );
        s
    }
}

pub fn classification_report(
    labels: &[u8],
    predictions: &[u8],
    probs: Option<&[f64]>,
) -> Result<ClassificationReport> {
    if labels.is_empty() {
        return Err(Error::Empty("evaluation labels"));
    }
    let confusion = ConfusionMatrix::from_predictions(labels, predictions)?;
    let roc_auc = match probs {
        Some(p) => {
            if p.len() != labels.len() {
                return Err(Error::LengthMismatch {
                    left: labels.len(),
                    right: p.len(),
                });
            }
            let auc = roc_auc(p, labels);
            if auc.is_none() {
                log::warn!("ROC-AUC undefined: labels contain a single class");
            }
            auc
        }
        None => None,
    };
    let c0 = confusion.class_metrics(0);
    let c1 = confusion.class_metrics(1);
    let n = labels.len() as f64;
    let (w0, w1) = (c0.support as f64 / n, c1.support as f64 / n);
    let macro_avg = AveragedMetrics {
        precision: (c0.precision + c1.precision) / 2.0,
        recall: (c0.recall + c1.recall) / 2.0,
        f1: (c0.f1 + c1.f1) / 2.0,
    };
    let weighted_avg = AveragedMetrics {
        precision: w0 * c0.precision + w1 * c1.precision,
        recall: w0 * c0.recall + w1 * c1.recall,
        f1: w0 * c0.f1 + w1 * c1.f1,
    };
    let per_class = BTreeMap::from([("0".to_string(), c0), ("1".to_string(), c1)]);
    Ok(ClassificationReport {
        n: labels.len(),
        accuracy: confusion.accuracy(),
        per_class,
        macro_avg,
        weighted_avg,
        roc_auc,
        confusion,
    })
}

/// Mann-Whitney statistic with midranks. `None` when one class is absent.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 || scores.len() != labels.len() {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean.
        let midrank = (i + j + 2) as f64 / 2.0;
        rank_sum_pos += midrank * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub means: Vec<f64>,
    /// Unit-norm principal axes, strongest first.
    pub axes: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
}

/// Top-`q` eigenvectors of the sample covariance. Each axis is signed so its
/// largest-magnitude entry is positive.
pub fn pca_fit(x: &FeatureMatrix, q: usize) -> Result<PcaModel> {
    let (n, d) = (x.n_rows, x.n_cols);
    if n < 2 || q == 0 || q > (n - 1).min(d) {
        return Err(Error::InvalidInput(format!(
            "q = {q} not in 1..={} for {n}x{d} data",
            (n.max(1) - 1).min(d)
        )));
    }
    let means: Vec<f64> = (0..d)
        .map(|j| x.rows().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in x.rows() {
        for a in 0..d {
            let da = r[a] - means[a];
            for b in a..d {
                cov[(a, b)] += da * (r[b] - means[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .total_cmp(&eig.eigenvalues[i])
            .then(i.cmp(&j))
    });
    let mut axes = Vec::with_capacity(q);
    let mut explained_variance = Vec::with_capacity(q);
    for &k in order.iter().take(q) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let norm = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
        axis.iter_mut().for_each(|v| *v /= norm);
        let lead = axis
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if lead < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        axes.push(axis);
        explained_variance.push(eig.eigenvalues[k].max(0.0));
    }
    Ok(PcaModel {
        means,
        axes,
        explained_variance,
        total_variance,
    })
}

pub fn pca_project(model: &PcaModel, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
    if x.n_cols != model.means.len() {
        return Err(Error::DimensionMismatch {
            expected: model.means.len(),
            got: x.n_cols,
        });
    }
    Ok(x.rows()
        .map(|r| {
            model
                .axes
                .iter()
                .map(|axis| {
                    axis.iter()
                        .zip(r)
                        .zip(&model.means)
                        .map(|((a, v), m)| a * (v - m))
                        .sum()
                })
                .collect()
        })
        .collect())
}

pub fn pca_reconstruct(model: &PcaModel, scores: &[Vec<f64>]) -> Vec<Vec<f64>> {
    scores
        .iter()
        .map(|s| {
            let mut row = model.means.clone();
            for (axis, &c) in model.axes.iter().zip(s) {
                for (v, a) in row.iter_mut().zip(axis) {
                    *v += c * a;
                }
            }
            row
        })
        .collect()
}
