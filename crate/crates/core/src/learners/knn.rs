use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{check_binary, check_dims, Classifier};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnWeighting {
    Uniform,
}

/// Euclidean kNN over stored rows. Equal distances resolve to the lower row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub weighting: KnnWeighting,
    pub n_cols: usize,
    pub data: Vec<f64>,
    pub labels: Vec<u8>,
}

#[derive(PartialEq)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

impl KnnModel {
    pub fn fit(x: &FeatureMatrix, y: &[u8], k: usize) -> Result<KnnModel> {
        if y.len() != x.n_rows {
            return Err(Error::LengthMismatch {
                left: x.n_rows,
                right: y.len(),
            });
        }
        Self::from_parts(x.data.clone(), x.n_cols, y.to_vec(), k)
    }

    /// Keep only `rows` of `x` as the reference set.
    pub fn fit_rows(x: &FeatureMatrix, y: &[u8], rows: &[usize], k: usize) -> Result<KnnModel> {
        let sub = x.subset(rows);
        let labels = rows.iter().map(|&r| y[r]).collect();
        Self::from_parts(sub.data, x.n_cols, labels, k)
    }

    fn from_parts(data: Vec<f64>, n_cols: usize, labels: Vec<u8>, k: usize) -> Result<KnnModel> {
        if k == 0 {
            return Err(Error::InvalidInput("k must be positive".into()));
        }
        if k > labels.len() {
            return Err(Error::InvalidInput(format!(
                "k = {k} exceeds {} reference rows",
                labels.len()
            )));
        }
        check_binary(&labels)?;
        Ok(KnnModel {
            k,
            weighting: KnnWeighting::Uniform,
            n_cols,
            data,
            labels,
        })
    }

    pub fn n_train(&self) -> usize {
        self.labels.len()
    }

    /// Indices of the k nearest rows, nearest first.
    pub fn neighbors(&self, x: &[f64]) -> Result<Vec<usize>> {
        check_dims(self.n_cols, x)?;
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(self.k + 1);
        for (index, row) in self.data.chunks_exact(self.n_cols.max(1)).enumerate() {
            let dist: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            let c = Candidate { dist, index };
            if heap.len() < self.k {
                heap.push(c);
            } else if heap.peek().is_some_and(|worst| c < *worst) {
                heap.pop();
                heap.push(c);
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| c.index)
            .collect())
    }
}

impl Classifier for KnnModel {
    fn n_features(&self) -> usize {
        self.n_cols
    }

    fn predict_proba_row(&self, x: &[f64]) -> Result<f64> {
        let nb = self.neighbors(x)?;
        let positives = nb.iter().filter(|&&i| self.labels[i] == 1).count();
        Ok(positives as f64 / self.k as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five_points() -> FeatureMatrix {
        FeatureMatrix::from_rows(
            vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 2.0],
                vec![3.0, 3.0],
                vec![-1.0, 0.0],
            ],
            vec![1, 0, 1, 0, 0],
        )
        .unwrap()
    }

    #[test]
    fn k1_on_training_point_returns_its_label() {
        let x = five_points();
        let m = KnnModel::fit(&x, &x.labels, 1).unwrap();
        for (i, r) in x.rows().enumerate() {
            assert_eq!(m.predict_proba_row(r).unwrap(), x.labels[i] as f64);
        }
    }

    #[test]
    fn k3_hand_table() {
        // Squared distances from (0.4, 0): 0.16, 0.36, 4.16, 16.76, 1.96.
        let x = five_points();
        let m = KnnModel::fit(&x, &x.labels, 3).unwrap();
        assert_eq!(m.neighbors(&[0.4, 0.0]).unwrap(), vec![0, 1, 4]);
        assert!((m.predict_proba_row(&[0.4, 0.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn equidistant_tie_prefers_lower_index() {
        // Rows 1 and 4 are both at distance 1 from the origin.
        let x = five_points();
        let m = KnnModel::fit(&x, &x.labels, 2).unwrap();
        assert_eq!(m.neighbors(&[0.0, 0.0]).unwrap(), vec![0, 1]);
    }

    #[test]
    fn k_equals_n_gives_base_rate() {
        let x = five_points();
        let m = KnnModel::fit(&x, &x.labels, 5).unwrap();
        assert_eq!(m.predict_proba_row(&[100.0, -7.0]).unwrap(), 0.4);
    }

    #[test]
    fn dimension_and_k_checks() {
        let x = five_points();
        assert!(KnnModel::fit(&x, &x.labels, 6).is_err());
        assert!(KnnModel::fit(&x, &x.labels, 0).is_err());
        let m = KnnModel::fit(&x, &x.labels, 2).unwrap();
        assert!(matches!(
            m.predict_proba_row(&[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
