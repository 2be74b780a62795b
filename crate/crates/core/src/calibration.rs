//! Margin-to-probability calibration: Platt scaling and isotonic regression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{logistic_loss, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattCalibrator {
    pub a: f64,
    pub b: f64,
}

impl PlattCalibrator {
    pub fn apply(&self, margin: f64) -> f64 {
        sigmoid(self.a * margin + self.b)
    }
}

fn check_inputs(margins: &[f64], labels: &[u8], min_per_class: usize) -> Result<()> {
    if margins.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: margins.len(),
            right: labels.len(),
        });
    }
    if margins.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidInput(
            "calibration margins must be finite".into(),
        ));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::InvalidInput(
            "calibration labels must be binary".into(),
        ));
    }
    if pos < min_per_class || labels.len() - pos < min_per_class {
        return Err(Error::SingleClass(if min_per_class > 1 {
            "calibration needs at least two samples of each class"
        } else {
            "calibration needs both classes"
        }));
    }
    Ok(())
}

fn platt_objective(margins: &[f64], labels: &[u8], a: f64, b: f64) -> f64 {
    let n = margins.len() as f64;
    margins
        .iter()
        .zip(labels)
        .map(|(&m, &y)| logistic_loss(a * m + b, y as f64))
        .sum::<f64>()
        / n
}

/// One-dimensional logistic regression of labels on margins, solved by damped
/// Newton steps until the gradient norm drops below 1e-8.
pub fn fit_platt(margins: &[f64], labels: &[u8]) -> Result<PlattCalibrator> {
    check_inputs(margins, labels, 2)?;
    let n = margins.len() as f64;
    let (mut a, mut b) = (1.0, 0.0);
    let mut loss = platt_objective(margins, labels, a, b);
    for _ in 0..200 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&m, &y) in margins.iter().zip(labels) {
            let p = sigmoid(a * m + b);
            let r = p - y as f64;
            let w = p * (1.0 - p);
            ga += r * m;
            gb += r;
            haa += w * m * m;
            hab += w * m;
            hbb += w;
        }
        let (ga, gb) = (ga / n, gb / n);
        if (ga * ga + gb * gb).sqrt() < 1e-8 {
            break;
        }
        let ridge = 1e-10;
        let (haa, hab, hbb) = (haa / n + ridge, hab / n, hbb / n + ridge);
        let det = haa * hbb - hab * hab;
        let (mut da, mut db) = if det > 1e-300 {
            ((hbb * ga - hab * gb) / det, (haa * gb - hab * ga) / det)
        } else {
            (ga, gb)
        };
        let mut accepted = false;
        for _ in 0..60 {
            let cand = platt_objective(margins, labels, a - da, b - db);
            if cand <= loss {
                a -= da;
                b -= db;
                loss = cand;
                accepted = true;
                break;
            }
            da *= 0.5;
            db *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFiniteLoss("Platt parameters diverged".into()));
    }
    Ok(PlattCalibrator { a, b })
}

/// Monotone piecewise-linear map through pooled breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicCalibrator {
    pub margins: Vec<f64>,
    pub values: Vec<f64>,
}

impl IsotonicCalibrator {
    pub fn apply(&self, margin: f64) -> f64 {
        let xs = &self.margins;
        let ys = &self.values;
        if margin <= xs[0] {
            return ys[0];
        }
        let last = xs.len() - 1;
        if margin >= xs[last] {
            return ys[last];
        }
        let hi = xs.partition_point(|&x| x <= margin);
        let lo = hi - 1;
        let t = (margin - xs[lo]) / (xs[hi] - xs[lo]);
        ys[lo] + t * (ys[hi] - ys[lo])
    }
}

/// Isotonic least-squares fit by pool-adjacent-violators. Equal margins share
/// one level.
pub fn fit_isotonic(margins: &[f64], labels: &[u8]) -> Result<IsotonicCalibrator> {
    check_inputs(margins, labels, 1)?;
    let mut order: Vec<usize> = (0..margins.len()).collect();
    order.sort_by(|&i, &j| margins[i].total_cmp(&margins[j]));

    // Blocks of (first margin index into `xs`, weight, mean).
    let mut xs: Vec<f64> = Vec::new();
    let mut blocks: Vec<(usize, f64, f64)> = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let m = margins[order[i]];
        let mut sum = 0.0;
        let mut w = 0.0;
        while i < order.len() && margins[order[i]] == m {
            sum += labels[order[i]] as f64;
            w += 1.0;
            i += 1;
        }
        let start = xs.len();
        xs.push(m);
        blocks.push((start, w, sum / w));
        while blocks.len() > 1 && blocks[blocks.len() - 2].2 > blocks[blocks.len() - 1].2 {
            let (_, w2, v2) = blocks.pop().unwrap();
            let last = blocks.last_mut().unwrap();
            last.2 = (last.1 * last.2 + w2 * v2) / (last.1 + w2);
            last.1 += w2;
        }
    }
    let mut ys = vec![0.0; xs.len()];
    for (k, &(start, _, v)) in blocks.iter().enumerate() {
        let end = blocks.get(k + 1).map_or(xs.len(), |b| b.0);
        ys[start..end].iter_mut().for_each(|y| *y = v);
    }
    // Interior points sitting on a flat run add nothing to the interpolant.
    let mut cx = Vec::with_capacity(xs.len());
    let mut cy = Vec::with_capacity(xs.len());
    for k in 0..xs.len() {
        let flat = k > 0 && k + 1 < xs.len() && ys[k - 1] == ys[k] && ys[k + 1] == ys[k];
        if !flat {
            cx.push(xs[k]);
            cy.push(ys[k]);
        }
    }
    Ok(IsotonicCalibrator {
        margins: cx,
        values: cy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Calibrator {
    Platt(PlattCalibrator),
    Isotonic(IsotonicCalibrator),
}

impl Calibrator {
    pub fn apply(&self, margin: f64) -> f64 {
        match self {
            Calibrator::Platt(c) => c.apply(margin),
            Calibrator::Isotonic(c) => c.apply(margin),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Calibrator::Platt(_) => "platt",
            Calibrator::Isotonic(_) => "isotonic",
        }
    }
}

pub fn brier_score(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: labels.len(),
        });
    }
    if probs.is_empty() {
        return Err(Error::Empty("brier score inputs"));
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidInput(
            "probabilities must lie in [0, 1]".into(),
        ));
    }
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| (p - y as f64).powi(2))
        .sum();
    Ok(sum / probs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brier_examples() {
        assert_eq!(brier_score(&[1.0, 0.0], &[1, 0]).unwrap(), 0.0);
        assert_eq!(brier_score(&[0.5; 4], &[1, 0, 1, 1]).unwrap(), 0.25);
        assert!((brier_score(&[0.8, 0.3], &[1, 0]).unwrap() - 0.065).abs() < 1e-15);
        assert!(brier_score(&[0.5], &[1, 0]).is_err());
    }

    #[test]
    fn isotonic_pools_violators() {
        let c = fit_isotonic(&[1.0, 2.0, 3.0, 4.0], &[1, 0, 1, 0]).unwrap();
        let fitted: Vec<f64> = [1.0, 2.0, 3.0, 4.0].iter().map(|&m| c.apply(m)).collect();
        assert_eq!(fitted, vec![0.5, 0.5, 0.5, 0.5]);
        let c = fit_isotonic(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1, 0, 1, 0, 1]).unwrap();
        assert_eq!(c.apply(1.0), 0.5);
        assert_eq!(c.apply(5.0), 1.0);
    }

    #[test]
    fn isotonic_three_point_example() {
        let c = fit_isotonic(&[1.0, 2.0, 3.0], &[1, 0, 1]).unwrap();
        assert_eq!([1.0, 2.0, 3.0].map(|m| c.apply(m)), [0.5, 0.5, 1.0]);
        assert!(fit_platt(&[1.0, 2.0, 3.0], &[1, 0, 1]).is_err());
        assert!(fit_isotonic(&[1.0, 2.0], &[1, 1]).is_err());
    }

    #[test]
    fn isotonic_hand_example() {
        let c = fit_isotonic(&[1.0, 2.0, 3.0, 0.0, -1.0], &[1, 0, 1, 0, 0]).unwrap();
        assert_eq!(c.apply(1.0), 0.5);
        assert_eq!(c.apply(2.0), 0.5);
        assert_eq!(c.apply(3.0), 1.0);
        assert_eq!(c.apply(2.5), 0.75);
        assert_eq!(c.apply(10.0), 1.0);
        assert_eq!(c.apply(-10.0), 0.0);
    }

    #[test]
    fn isotonic_monotone_labels_are_identity() {
        let c = fit_isotonic(&[0.0, 1.0, 2.0, 3.0], &[0, 0, 1, 1]).unwrap();
        assert_eq!(c.apply(0.0), 0.0);
        assert_eq!(c.apply(3.0), 1.0);
        assert_eq!(c.apply(1.5), 0.5);
    }

    #[test]
    fn platt_zero_margins_give_base_rate() {
        let c = fit_platt(&[0.0; 6], &[1, 0, 1, 0, 1, 0]).unwrap();
        assert!(c.b.abs() < 1e-8);
        assert!((c.apply(0.0) - 0.5).abs() < 1e-8);
    }

    #[test]
    fn single_class_is_rejected() {
        assert!(matches!(
            fit_platt(&[0.1, 0.2, 0.3], &[1, 1, 1]),
            Err(Error::SingleClass(_))
        ));
        assert!(fit_platt(&[0.1, 0.2, 0.3, 0.4], &[1, 1, 1, 0]).is_err());
        assert!(matches!(
            fit_isotonic(&[0.1, 0.2, 0.3], &[0, 0, 0]),
            Err(Error::SingleClass(_))
        ));
    }
}
