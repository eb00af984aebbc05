use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::matrix::Matrix;

/// Lazy k-nearest-neighbour classifier (Euclidean distance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub n_classes: usize,
    pub x: Matrix,
    pub y: Vec<usize>,
}

impl KnnModel {
    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, k: usize) -> Result<Self, ModelError> {
        if k > x.rows() {
            return Err(ModelError::KTooLarge { k, n: x.rows() });
        }
        Ok(Self {
            k,
            n_classes,
            x: x.clone(),
            y: y.to_vec(),
        })
    }

    /// Indices of the `k` nearest training rows; distance ties go to the
    /// lower index.
    pub fn neighbours(&self, row: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = (0..self.x.rows())
            .map(|i| {
                let dist: f64 = self
                    .x
                    .row(i)
                    .iter()
                    .zip(row)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (dist, i)
            })
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.truncate(self.k);
        d.into_iter().map(|(_, i)| i).collect()
    }

    /// Vote shares among the k neighbours.
    pub fn proba(&self, row: &[f64]) -> Vec<f64> {
        let mut votes = vec![0usize; self.n_classes];
        for i in self.neighbours(row) {
            votes[self.y[i]] += 1;
        }
        votes.iter().map(|&v| v as f64 / self.k as f64).collect()
    }
}
