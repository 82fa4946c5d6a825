//! k-nearest-neighbour regression with uniform weights.

use serde::{Deserialize, Serialize};

use super::{squared_distance, RowMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 5 }
    }
}

impl KnnParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("knn k must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub train: RowMatrix,
    pub targets: Vec<f64>,
}

impl KnnModel {
    pub fn fit(params: &KnnParams, x: &RowMatrix, y: &[f64]) -> Result<Self> {
        if params.k > x.rows {
            return Err(Error::invalid(format!("knn k = {} exceeds {} training rows", params.k, x.rows)));
        }
        Ok(KnnModel { k: params.k, train: x.clone(), targets: y.to_vec() })
    }

    pub fn input_dim(&self) -> usize {
        self.train.cols
    }

    /// Indices of the `k` nearest training rows; equal distances go to the
    /// lower training index.
    pub fn neighbours(&self, query: &[f64]) -> Vec<usize> {
        let mut cand: Vec<(f64, usize)> =
            (0..self.train.rows).map(|i| (squared_distance(self.train.row(i), query), i)).collect();
        let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < cand.len() {
            cand.select_nth_unstable_by(self.k - 1, by_key);
            cand.truncate(self.k);
        }
        cand.sort_by(by_key);
        cand.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict(&self, x: &RowMatrix) -> Vec<f64> {
        (0..x.rows)
            .map(|i| {
                let idx = self.neighbours(x.row(i));
                idx.iter().map(|&j| self.targets[j]).sum::<f64>() / idx.len() as f64
            })
            .collect()
    }
}
