//! Greedy binary trees over dense features.
//!
//! One builder serves two criteria: Gini impurity for classification and the
//! second-order (gradient/hessian) gain used by boosting. Samples with
//! `x[feature] <= threshold` go left. Candidate thresholds are midpoints of
//! consecutive distinct values, and among equal scores the lowest feature index
//! and then the lowest threshold win.

use serde::{Deserialize, Serialize};

use super::{check_binary, check_dims, Classifier};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        /// Training samples that reached this node.
        count: usize,
        /// Count-weighted mean of the leaf values below this node.
        expected: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
        count: usize,
    },
}

impl TreeNode {
    pub fn count(&self) -> usize {
        match self {
            TreeNode::Internal { count, .. } | TreeNode::Leaf { count, .. } => *count,
        }
    }

    pub fn expected(&self) -> f64 {
        match self {
            TreeNode::Internal { expected, .. } => *expected,
            TreeNode::Leaf { value, .. } => *value,
        }
    }

    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaves() + right.leaves(),
        }
    }

    fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Internal {
                feature,
                left,
                right,
                ..
            } => Some(
                (*feature)
                    .max(left.max_feature().unwrap_or(0))
                    .max(right.max_feature().unwrap_or(0)),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeKind {
    ClassificationGini,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub kind: TreeKind,
    pub feature_count: usize,
    pub depth: usize,
    pub leaf_count: usize,
    pub root: TreeNode,
}

impl TreeModel {
    fn new(kind: TreeKind, feature_count: usize, root: TreeNode) -> TreeModel {
        debug_assert!(root.max_feature().is_none_or(|f| f < feature_count));
        TreeModel {
            kind,
            feature_count,
            depth: root.depth(),
            leaf_count: root.leaves(),
            root,
        }
    }

    /// Leaf value for `x`. Callers must have checked `x.len()`.
    pub fn leaf_value(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<f64> {
        check_dims(self.feature_count, x)?;
        Ok(self.leaf_value(x))
    }

    /// Internal nodes visited from the root plus the reached leaf.
    pub fn path<'a>(&'a self, x: &[f64]) -> (Vec<&'a TreeNode>, &'a TreeNode) {
        let mut nodes = Vec::new();
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { .. } => return (nodes, node),
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    nodes.push(node);
                    node = if x[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        fn walk(n: &TreeNode, out: &mut Vec<usize>) {
            if let TreeNode::Internal {
                feature,
                left,
                right,
                ..
            } = n
            {
                out.push(*feature);
                walk(left, out);
                walk(right, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out.sort_unstable();
        out.dedup();
        out
    }
}

impl Classifier for TreeModel {
    fn n_features(&self) -> usize {
        self.feature_count
    }

    fn predict_proba_row(&self, x: &[f64]) -> Result<f64> {
        self.predict_row(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 8,
            min_samples_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionTreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    /// L1 penalty on leaf values.
    pub alpha: f64,
    /// Minimum hessian sum per child.
    pub min_child_weight: f64,
}

impl Default for RegressionTreeParams {
    fn default() -> Self {
        RegressionTreeParams {
            max_depth: 8,
            min_samples_leaf: 1,
            lambda: 1.0,
            alpha: 0.1,
            min_child_weight: 1.0,
        }
    }
}

/// `sign(g) · max(|g| - alpha, 0)`.
pub fn soft_threshold(g: f64, alpha: f64) -> f64 {
    g.signum() * (g.abs() - alpha).max(0.0)
}

/// Sufficient statistics of a node: `(Σy, n)` for Gini, `(Σg, Σh)` for gain.
#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    a: f64,
    b: f64,
    n: usize,
}

impl Acc {
    fn add(&mut self, a: f64, b: f64) {
        self.a += a;
        self.b += b;
        self.n += 1;
    }

    fn minus(self, o: Acc) -> Acc {
        Acc {
            a: self.a - o.a,
            b: self.b - o.b,
            n: self.n - o.n,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Criterion {
    Gini,
    Newton {
        lambda: f64,
        alpha: f64,
        min_child_weight: f64,
    },
}

fn gini(positives: f64, n: usize) -> f64 {
    let m = n as f64;
    let neg = m - positives;
    1.0 - (positives * positives + neg * neg) / (m * m)
}

impl Criterion {
    fn can_split(&self, node: Acc) -> bool {
        match self {
            Criterion::Gini => gini(node.a, node.n) > 0.0,
            Criterion::Newton { .. } => true,
        }
    }

    /// Higher is better; `None` when the split is not admissible.
    fn score(&self, node: Acc, left: Acc, right: Acc) -> Option<f64> {
        match *self {
            Criterion::Gini => {
                let m = node.n as f64;
                Some(
                    -((left.n as f64) * gini(left.a, left.n)
                        + (right.n as f64) * gini(right.a, right.n))
                        / m,
                )
            }
            Criterion::Newton {
                lambda,
                min_child_weight,
                ..
            } => {
                if left.b < min_child_weight || right.b < min_child_weight {
                    return None;
                }
                let gain = 0.5
                    * (left.a * left.a / (left.b + lambda)
                        + right.a * right.a / (right.b + lambda)
                        - node.a * node.a / (node.b + lambda));
                (gain > 0.0).then_some(gain)
            }
        }
    }

    fn leaf_value(&self, node: Acc) -> f64 {
        match *self {
            Criterion::Gini => node.a / node.n as f64,
            Criterion::Newton { lambda, alpha, .. } => {
                -soft_threshold(node.a, alpha) / (node.b + lambda)
            }
        }
    }
}

/// Tree fitting over a subset of rows and features of a row-major matrix.
/// `rows` may repeat indices (bootstrap samples).
pub struct TreeBuilder<'a> {
    data: &'a [f64],
    n_cols: usize,
    rows: &'a [usize],
    features: &'a [usize],
    /// Per-sample statistics aligned with `rows`.
    stat_a: Vec<f64>,
    stat_b: Vec<f64>,
    criterion: Criterion,
    max_depth: usize,
    min_samples_leaf: usize,
}

struct Best {
    score: f64,
    feature_slot: usize,
    position: usize,
    threshold: f64,
}

impl<'a> TreeBuilder<'a> {
    pub fn classification(
        x: &'a FeatureMatrix,
        y: &[u8],
        rows: &'a [usize],
        features: &'a [usize],
        params: TreeParams,
    ) -> TreeBuilder<'a> {
        TreeBuilder {
            data: &x.data,
            n_cols: x.n_cols,
            rows,
            features,
            stat_a: rows.iter().map(|&r| y[r] as f64).collect(),
            stat_b: vec![1.0; rows.len()],
            criterion: Criterion::Gini,
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf.max(1),
        }
    }

    pub fn regression(
        x: &'a FeatureMatrix,
        gradients: &[f64],
        hessians: &[f64],
        rows: &'a [usize],
        features: &'a [usize],
        params: RegressionTreeParams,
    ) -> TreeBuilder<'a> {
        TreeBuilder {
            data: &x.data,
            n_cols: x.n_cols,
            rows,
            features,
            stat_a: rows.iter().map(|&r| gradients[r]).collect(),
            stat_b: rows.iter().map(|&r| hessians[r]).collect(),
            criterion: Criterion::Newton {
                lambda: params.lambda,
                alpha: params.alpha,
                min_child_weight: params.min_child_weight,
            },
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf.max(1),
        }
    }

    fn value(&self, sample: usize, feature: usize) -> f64 {
        self.data[self.rows[sample] * self.n_cols + feature]
    }

    pub fn build(self, kind: TreeKind) -> Result<TreeModel> {
        if self.rows.is_empty() {
            return Err(Error::Empty("tree training rows"));
        }
        let m = self.rows.len();
        let sorted: Vec<Vec<usize>> = self
            .features
            .iter()
            .map(|&f| {
                let mut idx: Vec<usize> = (0..m).collect();
                idx.sort_by(|&i, &j| {
                    self.value(i, f)
                        .total_cmp(&self.value(j, f))
                        .then(i.cmp(&j))
                });
                idx
            })
            .collect();
        let mut goes_left = vec![false; m];
        let root = if sorted.is_empty() {
            let all: Vec<usize> = (0..m).collect();
            self.leaf(self.accumulate(&all), m)
        } else {
            self.grow(sorted, 0, &mut goes_left)
        };
        Ok(TreeModel::new(kind, self.n_cols, root))
    }

    fn accumulate(&self, samples: &[usize]) -> Acc {
        let mut acc = Acc::default();
        for &s in samples {
            acc.add(self.stat_a[s], self.stat_b[s]);
        }
        acc
    }

    fn leaf(&self, acc: Acc, count: usize) -> TreeNode {
        TreeNode::Leaf {
            value: self.criterion.leaf_value(acc),
            count,
        }
    }

    fn grow(&self, sorted: Vec<Vec<usize>>, depth: usize, goes_left: &mut [bool]) -> TreeNode {
        let m = sorted[0].len();
        let node = self.accumulate(&sorted[0]);
        if depth >= self.max_depth
            || m < 2 * self.min_samples_leaf
            || !self.criterion.can_split(node)
        {
            return self.leaf(node, m);
        }
        let Some(best) = self.find_split(&sorted, node) else {
            return self.leaf(node, m);
        };
        let feature = self.features[best.feature_slot];
        for (pos, &s) in sorted[best.feature_slot].iter().enumerate() {
            goes_left[s] = pos <= best.position;
        }
        let (mut left_lists, mut right_lists) = (
            Vec::with_capacity(sorted.len()),
            Vec::with_capacity(sorted.len()),
        );
        for list in &sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = list.iter().partition(|&&s| goes_left[s]);
            left_lists.push(l);
            right_lists.push(r);
        }
        drop(sorted);
        let left = self.grow(left_lists, depth + 1, goes_left);
        let right = self.grow(right_lists, depth + 1, goes_left);
        let expected = (left.count() as f64 * left.expected()
            + right.count() as f64 * right.expected())
            / m as f64;
        TreeNode::Internal {
            feature,
            threshold: best.threshold,
            count: m,
            expected,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn find_split(&self, sorted: &[Vec<usize>], node: Acc) -> Option<Best> {
        let msl = self.min_samples_leaf;
        let mut best: Option<Best> = None;
        for (slot, list) in sorted.iter().enumerate() {
            let f = self.features[slot];
            let mut left = Acc::default();
            for pos in 0..list.len() - 1 {
                let s = list[pos];
                left.add(self.stat_a[s], self.stat_b[s]);
                let (lo, hi) = (self.value(s, f), self.value(list[pos + 1], f));
                if lo == hi || left.n < msl || list.len() - left.n < msl {
                    continue;
                }
                let right = node.minus(left);
                let Some(score) = self.criterion.score(node, left, right) else {
                    continue;
                };
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(Best {
                        score,
                        feature_slot: slot,
                        position: pos,
                        threshold,
                    });
                }
            }
        }
        best
    }
}

/// CART with Gini impurity over all rows and features. Leaves hold the class-1 proportion.
pub fn fit_classification_tree(
    x: &FeatureMatrix,
    y: &[u8],
    max_depth: usize,
    min_samples_leaf: usize,
) -> Result<TreeModel> {
    if x.n_rows == 0 {
        return Err(Error::Empty("tree training rows"));
    }
    if y.len() != x.n_rows {
        return Err(Error::LengthMismatch {
            left: x.n_rows,
            right: y.len(),
        });
    }
    if max_depth == 0 {
        return Err(Error::InvalidInput("max_depth must be at least 1".into()));
    }
    check_binary(y)?;
    let rows: Vec<usize> = (0..x.n_rows).collect();
    let features: Vec<usize> = (0..x.n_cols).collect();
    TreeBuilder::classification(
        x,
        y,
        &rows,
        &features,
        TreeParams {
            max_depth,
            min_samples_leaf,
        },
    )
    .build(TreeKind::ClassificationGini)
}

/// Newton-step regression tree over all rows and features.
pub fn fit_regression_tree(
    x: &FeatureMatrix,
    gradients: &[f64],
    hessians: &[f64],
    params: RegressionTreeParams,
) -> Result<TreeModel> {
    if x.n_rows == 0 {
        return Err(Error::Empty("tree training rows"));
    }
    if gradients.len() != x.n_rows || hessians.len() != x.n_rows {
        return Err(Error::LengthMismatch {
            left: x.n_rows,
            right: gradients.len().min(hessians.len()),
        });
    }
    if params.max_depth == 0 {
        return Err(Error::InvalidInput("max_depth must be at least 1".into()));
    }
    if gradients.iter().any(|g| !g.is_finite())
        || hessians.iter().any(|h| !h.is_finite() || *h <= 0.0)
    {
        return Err(Error::InvalidInput(
            "gradients must be finite and hessians positive".into(),
        ));
    }
    let rows: Vec<usize> = (0..x.n_rows).collect();
    let features: Vec<usize> = (0..x.n_cols).collect();
    TreeBuilder::regression(x, gradients, hessians, &rows, &features, params)
        .build(TreeKind::Regression)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>) -> FeatureMatrix {
        let n = rows.len();
        FeatureMatrix::from_rows(rows, vec![0; n]).unwrap()
    }

    #[test]
    fn separable_line_splits_at_midpoint() {
        let x = matrix(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let t = fit_classification_tree(&x, &[0, 0, 1, 1], 4, 1).unwrap();
        match &t.root {
            TreeNode::Internal {
                feature, threshold, ..
            } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 1.5);
            }
            other => panic!("expected a split, got {other:?}"),
        }
        assert_eq!(t.leaf_count, 2);
        let preds: Vec<f64> = x.rows().map(|r| t.leaf_value(r)).collect();
        assert_eq!(preds, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn pure_labels_give_single_leaf() {
        let x = matrix(vec![vec![0.0], vec![1.0], vec![2.0]]);
        let t = fit_classification_tree(&x, &[1, 1, 1], 4, 1).unwrap();
        assert_eq!(
            t.root,
            TreeNode::Leaf {
                value: 1.0,
                count: 3
            }
        );
    }

    #[test]
    fn xor_needs_a_zero_gain_first_split() {
        let x = matrix(vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ]);
        let y = [0, 1, 1, 0];
        let t = fit_classification_tree(&x, &y, usize::MAX, 1).unwrap();
        for (r, &label) in x.rows().zip(&y) {
            assert_eq!(t.leaf_value(r), label as f64);
        }
    }

    #[test]
    fn depth_limit_is_respected() {
        let x = matrix((0..32).map(|i| vec![i as f64]).collect());
        let y: Vec<u8> = (0..32).map(|i| (i % 2) as u8).collect();
        let t = fit_classification_tree(&x, &y, 3, 1).unwrap();
        assert!(t.depth <= 3);
    }

    #[test]
    fn empty_or_bad_input_errors() {
        let empty = FeatureMatrix::from_rows(vec![], vec![]).unwrap();
        assert!(fit_classification_tree(&empty, &[], 3, 1).is_err());
        let x = matrix(vec![vec![0.0], vec![1.0]]);
        assert!(fit_classification_tree(&x, &[0, 1], 0, 1).is_err());
        assert!(fit_classification_tree(&x, &[0, 2], 2, 1).is_err());
    }

    #[test]
    fn single_sample_leaf_value() {
        let x = matrix(vec![vec![0.0]]);
        let p = RegressionTreeParams {
            max_depth: 3,
            min_samples_leaf: 1,
            lambda: 1.0,
            alpha: 0.0,
            min_child_weight: 0.0,
        };
        let t = fit_regression_tree(&x, &[-0.5], &[0.25], p).unwrap();
        assert!((t.leaf_value(&[0.0]) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn soft_threshold_absorbs_small_gradient() {
        let x = matrix(vec![vec![0.0]]);
        let p = RegressionTreeParams {
            max_depth: 3,
            min_samples_leaf: 1,
            lambda: 1.0,
            alpha: 0.1,
            min_child_weight: 0.0,
        };
        let t = fit_regression_tree(&x, &[0.05], &[0.25], p).unwrap();
        assert_eq!(t.leaf_value(&[0.0]), 0.0);
        assert_eq!(soft_threshold(-0.3, 0.1), -0.19999999999999998);
    }

    #[test]
    fn non_positive_hessian_is_rejected() {
        let x = matrix(vec![vec![0.0], vec![1.0]]);
        assert!(fit_regression_tree(
            &x,
            &[0.1, 0.2],
            &[0.0, 0.2],
            RegressionTreeParams::default()
        )
        .is_err());
    }

    #[test]
    fn expected_values_are_count_weighted() {
        let x = matrix(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let t = fit_classification_tree(&x, &[0, 0, 1, 1, 1], 1, 1).unwrap();
        assert!((t.root.expected() - 0.6).abs() < 1e-15);
        assert_eq!(t.root.count(), 5);
    }
}
