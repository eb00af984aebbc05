use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ModelError, ModelState, TrainedModel};
use crate::matrix::Matrix;
use crate::seed;

/// Per-feature mean decrease in weighted Gini impurity, averaged over trees
/// and normalized to sum to 1. Each tree's scores are normalized before
/// averaging; trees without any split contribute nothing. All-zero totals
/// yield a uniform vector.
pub fn impurity_importance(model: &TrainedModel) -> Result<Vec<f64>, ModelError> {
    let d = model.feature_count;
    let per_tree: Vec<Vec<f64>> = match &model.state {
        ModelState::DecisionTree(t) => vec![t.raw_importance()],
        ModelState::RandomForest(f) => f.trees.iter().map(|t| t.raw_importance()).collect(),
        _ => return Err(ModelError::UnsupportedModel(model.spec.kind_name())),
    };
    let mut acc = vec![0.0; d];
    for raw in &per_tree {
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            for (a, v) in acc.iter_mut().zip(raw) {
                *a += v / total;
            }
        }
    }
    let total: f64 = acc.iter().sum();
    if total > 0.0 {
        acc.iter_mut().for_each(|v| *v /= total);
    } else if d > 0 {
        acc = vec![1.0 / d as f64; d];
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMetric {
    Accuracy,
    MacroF1,
}

impl ScoreMetric {
    pub fn score(self, y_true: &[usize], y_pred: &[usize], n_classes: usize) -> f64 {
        match self {
            ScoreMetric::Accuracy => {
                y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count() as f64 / y_true.len() as f64
            }
            ScoreMetric::MacroF1 => {
                let f1: f64 = (0..n_classes)
                    .map(|c| {
                        let tp = y_true.iter().zip(y_pred).filter(|(t, p)| **t == c && **p == c).count();
                        let fp = y_true.iter().zip(y_pred).filter(|(t, p)| **t != c && **p == c).count();
                        let fn_ = y_true.iter().zip(y_pred).filter(|(t, p)| **t == c && **p != c).count();
                        if tp == 0 {
                            0.0
                        } else {
                            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
                        }
                    })
                    .sum();
                f1 / n_classes as f64
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationImportance {
    pub metric: ScoreMetric,
    pub baseline: f64,
    /// Mean score drop per feature.
    pub mean: Vec<f64>,
    /// Population standard deviation of the drop per feature.
    pub std: Vec<f64>,
    pub n_repeats: usize,
}

/// Shuffles each column `n_repeats` times and records the metric drop.
/// Repeat `r` of feature `j` uses the generator seeded by
/// `derive_path(seed, [j, r])`, so results do not depend on scheduling.
pub fn permutation_importance(
    model: &TrainedModel,
    x: &Matrix,
    y: &[usize],
    metric: ScoreMetric,
    n_repeats: usize,
    seed: u64,
) -> Result<PermutationImportance, ModelError> {
    if x.rows() == 0 || y.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if x.rows() != y.len() {
        return Err(ModelError::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    let n_repeats = n_repeats.max(1);
    let baseline = metric.score(y, &model.predict(x)?, model.n_classes);
    let drops: Vec<Vec<f64>> = crate::par::map_range(x.cols(), |j| {
        let column = x.column(j);
        let mut work = x.clone();
        (0..n_repeats)
            .map(|r| {
                let mut perm = column.clone();
                perm.shuffle(&mut seed::rng(seed::derive_path(seed, &[j as u64, r as u64])));
                for (i, v) in perm.into_iter().enumerate() {
                    work.set(i, j, v);
                }
                let pred = model.predict(&work).expect("shape checked above");
                baseline - metric.score(y, &pred, model.n_classes)
            })
            .collect()
    });
    let mut mean = Vec::with_capacity(drops.len());
    let mut std = Vec::with_capacity(drops.len());
    for d in &drops {
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let v = d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / d.len() as f64;
        mean.push(m);
        std.push(v.sqrt());
    }
    Ok(PermutationImportance {
        metric,
        baseline,
        mean,
        std,
        n_repeats,
    })
}
