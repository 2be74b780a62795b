//! Brute-force reference implementations. Deliberately naive: each recomputes
//! from scratch what the library computes incrementally.
#![allow(dead_code)]

use gradrec::learners::TreeNode;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleNode {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<OracleNode>,
        right: Box<OracleNode>,
    },
}

/// Candidate thresholds: midpoints between consecutive distinct values.
fn thresholds(rows: &[usize], x: &[Vec<f64>], f: usize) -> Vec<f64> {
    let mut v: Vec<f64> = rows.iter().map(|&r| x[r][f]).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
}

fn gini_of(rows: &[usize], y: &[f64]) -> f64 {
    let n = rows.len() as f64;
    let p = rows.iter().map(|&r| y[r]).sum::<f64>() / n;
    2.0 * p * (1.0 - p)
}

pub fn oracle_cart(
    x: &[Vec<f64>],
    y: &[f64],
    rows: &[usize],
    depth: usize,
    max_depth: usize,
    msl: usize,
) -> OracleNode {
    let n = rows.len();
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n as f64;
    if depth >= max_depth || n < 2 * msl || gini_of(rows, y) == 0.0 {
        return OracleNode::Leaf(mean);
    }
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x[0].len() {
        for t in thresholds(rows, x, f) {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
            if l.len() < msl || r.len() < msl {
                continue;
            }
            let imp =
                (l.len() as f64 * gini_of(&l, y) + r.len() as f64 * gini_of(&r, y)) / n as f64;
            if best.is_none_or(|(b, _, _)| imp < b - 1e-12) {
                best = Some((imp, f, t));
            }
        }
    }
    match best {
        None => OracleNode::Leaf(mean),
        Some((_, f, t)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
            OracleNode::Split {
                feature: f,
                threshold: t,
                left: Box::new(oracle_cart(x, y, &l, depth + 1, max_depth, msl)),
                right: Box::new(oracle_cart(x, y, &r, depth + 1, max_depth, msl)),
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub min_child_weight: f64,
}

fn structure_score(rows: &[usize], g: &[f64], h: &[f64], lambda: f64) -> f64 {
    let gs: f64 = rows.iter().map(|&r| g[r]).sum();
    let hs: f64 = rows.iter().map(|&r| h[r]).sum();
    gs * gs / (hs + lambda)
}

pub fn oracle_newton_leaf(g_sum: f64, h_sum: f64, lambda: f64, alpha: f64) -> f64 {
    let shrunk = if g_sum > alpha {
        g_sum - alpha
    } else if g_sum < -alpha {
        g_sum + alpha
    } else {
        0.0
    };
    -shrunk / (h_sum + lambda)
}

pub fn oracle_newton(
    x: &[Vec<f64>],
    g: &[f64],
    h: &[f64],
    rows: &[usize],
    depth: usize,
    p: NewtonParams,
) -> OracleNode {
    let gs: f64 = rows.iter().map(|&r| g[r]).sum();
    let hs: f64 = rows.iter().map(|&r| h[r]).sum();
    let leaf = OracleNode::Leaf(oracle_newton_leaf(gs, hs, p.lambda, p.alpha));
    if depth >= p.max_depth || rows.len() < 2 {
        return leaf;
    }
    let parent = structure_score(rows, g, h, p.lambda);
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x[0].len() {
        for t in thresholds(rows, x, f) {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
            let hl: f64 = l.iter().map(|&i| h[i]).sum();
            let hr: f64 = r.iter().map(|&i| h[i]).sum();
            if hl < p.min_child_weight || hr < p.min_child_weight {
                continue;
            }
            let gain = 0.5
                * (structure_score(&l, g, h, p.lambda) + structure_score(&r, g, h, p.lambda)
                    - parent);
            if gain > 0.0 && best.is_none_or(|(b, _, _)| gain > b + 1e-12) {
                best = Some((gain, f, t));
            }
        }
    }
    match best {
        None => leaf,
        Some((_, f, t)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
            OracleNode::Split {
                feature: f,
                threshold: t,
                left: Box::new(oracle_newton(x, g, h, &l, depth + 1, p)),
                right: Box::new(oracle_newton(x, g, h, &r, depth + 1, p)),
            }
        }
    }
}

/// Structural equality up to `tol` on thresholds and leaf values.
pub fn same_tree(lib: &TreeNode, oracle: &OracleNode, tol: f64) -> bool {
    match (lib, oracle) {
        (TreeNode::Leaf { value, .. }, OracleNode::Leaf(v)) => (value - v).abs() <= tol,
        (
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
                ..
            },
            OracleNode::Split {
                feature: f,
                threshold: t,
                left: ol,
                right: or,
            },
        ) => {
            feature == f
                && (threshold - t).abs() <= tol
                && same_tree(left, ol, tol)
                && same_tree(right, or, tol)
        }
        _ => false,
    }
}

/// Least-squares monotone fit by trying every partition into contiguous blocks.
/// `ys` must already be ordered by strictly increasing input.
pub fn oracle_isotonic(ys: &[f64]) -> Vec<f64> {
    let n = ys.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let mut fit = Vec::with_capacity(n);
        let mut start = 0;
        for end in 1..=n {
            if end == n || mask & (1 << (end - 1)) != 0 {
                let m = ys[start..end].iter().sum::<f64>() / (end - start) as f64;
                fit.extend(std::iter::repeat_n(m, end - start));
                start = end;
            }
        }
        if fit.windows(2).any(|w| w[0] > w[1] + 1e-12) {
            continue;
        }
        let sse: f64 = fit.iter().zip(ys).map(|(f, y)| (f - y).powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b - 1e-12) {
            best = Some((sse, fit));
        }
    }
    best.expect("the all-pooled partition is always monotone").1
}

/// Fraction of (positive, negative) pairs ranked correctly; ties count half.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            den += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / den
}

/// Dominant eigenpairs of a symmetric matrix by power iteration with deflation.
pub fn power_iteration(mut a: Vec<Vec<f64>>, q: usize, iters: usize) -> Vec<(f64, Vec<f64>)> {
    let d = a.len();
    let mut out = Vec::new();
    for k in 0..q {
        let mut v: Vec<f64> = (0..d)
            .map(|i| 1.0 + (i * 7 + k * 3) as f64 * 0.01)
            .collect();
        let mut lambda = 0.0;
        for _ in 0..iters {
            let w: Vec<f64> = (0..d)
                .map(|i| (0..d).map(|j| a[i][j] * v[j]).sum())
                .collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            v = w.iter().map(|x| x / norm).collect();
            lambda = norm;
        }
        for i in 0..d {
            for j in 0..d {
                a[i][j] -= lambda * v[i] * v[j];
            }
        }
        out.push((lambda, v));
    }
    out
}

pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let means: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    rows.iter()
                        .map(|r| (r[i] - means[i]) * (r[j] - means[j]))
                        .sum::<f64>()
                        / (n - 1.0)
                })
                .collect()
        })
        .collect()
}

/// Indices of the `k` nearest rows by squared distance, ties to the lower index.
pub fn brute_neighbors(data: &[Vec<f64>], q: &[f64], k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = data
        .iter()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|p| p.1).collect()
}

/// Straight-line logistic loss with an L2 penalty on weights only.
pub fn direct_logreg_loss(rows: &[Vec<f64>], y: &[u8], params: &[f64], l2: f64) -> f64 {
    let d = rows[0].len();
    let mut total = 0.0;
    for (r, &yi) in rows.iter().zip(y) {
        let z: f64 = r.iter().zip(&params[..d]).map(|(a, b)| a * b).sum::<f64>() + params[d];
        let p = 1.0 / (1.0 + (-z).exp());
        total -= if yi == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    total / rows.len() as f64 + 0.5 * l2 * params[..d].iter().map(|w| w * w).sum::<f64>()
}

/// Accuracy, macro precision, recall and F1 from the four confusion cells.
pub fn hand_metrics(tp: f64, fp: f64, tn: f64, fn_: f64) -> (f64, f64, f64, f64) {
    let acc = (tp + tn) / (tp + fp + tn + fn_);
    let p1 = tp / (tp + fp);
    let r1 = tp / (tp + fn_);
    let p0 = tn / (tn + fn_);
    let r0 = tn / (tn + fp);
    let f1 = 2.0 * p1 * r1 / (p1 + r1);
    let f0 = 2.0 * p0 * r0 / (p0 + r0);
    (acc, (p0 + p1) / 2.0, (r0 + r1) / 2.0, (f0 + f1) / 2.0)
}
