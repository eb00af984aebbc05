use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DecisionTree, ForestParams, TreeParams};
use crate::matrix::Matrix;
use crate::{par, seed};

/// Bagged CART ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
    pub n_classes: usize,
}

/// Default features per split: `round(sqrt(d))`, at least 1.
pub fn default_mtry(d: usize) -> usize {
    ((d as f64).sqrt().round() as usize).max(1)
}

impl Forest {
    /// Tree `t` draws from its own generator seeded by `derive(seed, t)`, so
    /// the result does not depend on how trees are scheduled.
    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, params: &ForestParams, seed: u64) -> Forest {
        let n = x.rows();
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            mtry: Some(params.mtry.unwrap_or_else(|| default_mtry(x.cols()))),
        };
        let trees = par::map_range(params.n_trees, |t| {
            let mut rng = seed::rng(seed::derive(seed, t as u64));
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            DecisionTree::fit(x, y, n_classes, &rows, &tree_params, &mut rng)
        });
        Forest { trees, n_classes }
    }

    /// Mean of per-tree leaf frequencies. Each class column is summed in
    /// sorted order so the result is independent of tree order.
    pub fn proba(&self, row: &[f64]) -> Vec<f64> {
        let per_tree: Vec<Vec<f64>> = self.trees.iter().map(|t| t.proba(row)).collect();
        let n = self.trees.len() as f64;
        let mut out: Vec<f64> = (0..self.n_classes)
            .map(|c| {
                let mut col: Vec<f64> = per_tree.iter().map(|p| p[c]).collect();
                col.sort_by(f64::total_cmp);
                col.iter().sum::<f64>() / n
            })
            .collect();
        let total: f64 = out.iter().sum();
        if total > 0.0 {
            out.iter_mut().for_each(|p| *p /= total);
        }
        out
    }

    /// Hard votes per class (each tree votes for its leaf's majority class).
    pub fn votes(&self, row: &[f64]) -> Vec<usize> {
        let mut votes = vec![0; self.n_classes];
        for t in &self.trees {
            votes[super::argmax(&t.proba(row))] += 1;
        }
        votes
    }
}
