//! Small numeric helpers shared across learners and metrics.

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Log-odds of `p`, clamped away from 0 and 1 so the result stays finite.
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Numerically stable `log(1 + exp(z))`.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic loss of a margin against a binary label: `-y·log σ(z) - (1-y)·log(1-σ(z))`.
pub fn logistic_loss(margin: f64, label: f64) -> f64 {
    softplus(margin) - label * margin
}

pub fn mean_log_loss(margins: &[f64], labels: &[u8]) -> f64 {
    if margins.is_empty() {
        return 0.0;
    }
    margins
        .iter()
        .zip(labels)
        .map(|(&m, &y)| logistic_loss(m, y as f64))
        .sum::<f64>()
        / margins.len() as f64
}

/// Median of a slice (average of the two central values for even lengths).
/// Returns `None` for empty input.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Linear-interpolated quantile (`q` in [0,1]) of a slice; `None` when empty.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(v[lo] + (v[hi] - v[lo]) * frac)
}

/// Sample skewness (Fisher-Pearson, adjusted), matching pandas' `skew`.
pub fn skewness(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 3 {
        return None;
    }
    let m = mean(values);
    let (mut m2, mut m3) = (0.0, 0.0);
    for &x in values {
        let d = x - m;
        m2 += d * d;
        m3 += d * d * d;
    }
    let nf = n as f64;
    m2 /= nf;
    m3 /= nf;
    if m2 == 0.0 {
        return Some(0.0);
    }
    let g1 = m3 / m2.powf(1.5);
    Some(g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((sigmoid(logit(0.3)) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[3.0, 3.6]), Some(3.3));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn logistic_loss_matches_direct_formula() {
        for &(m, y) in &[(0.3, 1.0), (-2.0, 0.0), (4.0, 0.0)] {
            let p = sigmoid(m);
            let direct = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            assert!((logistic_loss(m, y) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn skewness_of_symmetric_data_is_zero() {
        assert!(skewness(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap().abs() < 1e-12);
        assert!(skewness(&[1.0, 3.8, 3.9, 3.9, 4.0]).unwrap() < 0.0);
    }
}
