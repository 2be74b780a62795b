use serde::{Deserialize, Serialize};

use super::{check_binary, check_dims, Classifier};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::math::{logistic_loss, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            l2: 1e-4,
            max_iter: 2000,
            tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LogRegModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

impl Classifier for LogRegModel {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn predict_proba_row(&self, x: &[f64]) -> Result<f64> {
        check_dims(self.weights.len(), x)?;
        Ok(sigmoid(self.margin(x)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegFit {
    pub model: LogRegModel,
    pub iterations: usize,
    pub converged: bool,
    pub final_loss: f64,
    pub gradient_norm: f64,
}

/// Mean logistic loss plus `l2·‖w‖²/2` and its gradient. `params` is
/// `[w_0 .. w_{d-1}, intercept]`; the intercept is not penalized.
pub fn logreg_loss_and_gradient(
    x: &FeatureMatrix,
    y: &[u8],
    params: &[f64],
    l2: f64,
) -> (f64, Vec<f64>) {
    let d = x.n_cols;
    let n = x.n_rows as f64;
    let (w, b) = params.split_at(d);
    let b = b[0];
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (row, &label) in x.rows().zip(y) {
        let m = b + w.iter().zip(row).map(|(a, v)| a * v).sum::<f64>();
        let yi = label as f64;
        loss += logistic_loss(m, yi);
        let r = sigmoid(m) - yi;
        for (g, v) in grad.iter_mut().zip(row) {
            *g += r * v;
        }
        grad[d] += r;
    }
    loss /= n;
    for g in &mut grad {
        *g /= n;
    }
    for j in 0..d {
        loss += 0.5 * l2 * w[j] * w[j];
        grad[j] += l2 * w[j];
    }
    (loss, grad)
}

/// Gradient descent with Armijo backtracking.
pub fn fit_logreg(x: &FeatureMatrix, y: &[u8], params: LogRegParams) -> Result<LogRegFit> {
    if x.n_rows == 0 {
        return Err(Error::Empty("logistic regression rows"));
    }
    if y.len() != x.n_rows {
        return Err(Error::LengthMismatch {
            left: x.n_rows,
            right: y.len(),
        });
    }
    check_binary(y)?;
    let d = x.n_cols;
    let mut theta = vec![0.0; d + 1];
    let (mut loss, mut grad) = logreg_loss_and_gradient(x, y, &theta, params.l2);
    let mut step: f64 = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2.sqrt() < params.tol {
            converged = true;
            break;
        }
        iterations += 1;
        step = (step * 2.0).min(64.0);
        loop {
            let cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - step * g).collect();
            let (l, g) = logreg_loss_and_gradient(x, y, &cand, params.l2);
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss(format!(
                    "logistic loss became {l} at iteration {iterations}"
                )));
            }
            if l <= loss - 1e-4 * step * gnorm2 || step < 1e-12 {
                theta = cand;
                loss = l;
                grad = g;
                break;
            }
            step *= 0.5;
        }
    }
    if !converged {
        converged = grad.iter().map(|g| g * g).sum::<f64>().sqrt() < params.tol;
    }
    let gradient_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let intercept = theta.pop().unwrap_or(0.0);
    if theta.iter().any(|w| !w.is_finite()) || !intercept.is_finite() {
        return Err(Error::NonFiniteLoss("non-finite coefficients".into()));
    }
    Ok(LogRegFit {
        model: LogRegModel {
            weights: theta,
            intercept,
        },
        iterations,
        converged,
        final_loss: loss,
        gradient_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::logit;

    #[test]
    fn separable_direction() {
        let x = FeatureMatrix::from_rows(
            vec![vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]],
            vec![0, 0, 1, 1],
        )
        .unwrap();
        let fit = fit_logreg(
            &x,
            &x.labels,
            LogRegParams {
                max_iter: 500,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(fit.model.weights[0] > 0.0);
    }

    #[test]
    fn constant_features_recover_base_rate() {
        let rows = vec![vec![0.0, 0.0]; 10];
        let y = vec![1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let x = FeatureMatrix::from_rows(rows, y.clone()).unwrap();
        let fit = fit_logreg(&x, &y, LogRegParams::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.model.intercept - logit(0.3)).abs() < 1e-3);
        assert!(fit.model.weights.iter().all(|w| w.abs() < 1e-9));
    }

    #[test]
    fn huge_unscaled_input_reports_progress_or_error() {
        let x = FeatureMatrix::from_rows(vec![vec![1e300], vec![-1e300]], vec![1, 0]).unwrap();
        let r = fit_logreg(
            &x,
            &x.labels,
            LogRegParams {
                max_iter: 5,
                ..Default::default()
            },
        );
        if let Ok(fit) = r {
            assert!(fit.final_loss.is_finite());
        }
    }
}
