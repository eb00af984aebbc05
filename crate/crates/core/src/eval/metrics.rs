use std::fmt::Display;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_list: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn zeros(class_list: Vec<String>) -> Self {
        let n = class_list.len();
        Self {
            class_list,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Tabulates class-index labels.
    pub fn from_indices(y_true: &[usize], y_pred: &[usize], class_list: &[String]) -> Result<Self, EvalError> {
        if y_true.len() != y_pred.len() {
            return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
        }
        let mut cm = Self::zeros(class_list.to_vec());
        let n = class_list.len();
        for (&t, &p) in y_true.iter().zip(y_pred) {
            for l in [t, p] {
                if l >= n {
                    return Err(EvalError::UnknownLabel(l.to_string()));
                }
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }
}

/// `counts[i][j]` = number of samples with true class `class_list[i]`
/// predicted as `class_list[j]`.
pub fn confusion<T: PartialEq + Display>(y_true: &[T], y_pred: &[T], class_list: &[T]) -> Result<ConfusionMatrix, EvalError> {
    let index = |v: &T| {
        class_list
            .iter()
            .position(|c| c == v)
            .ok_or_else(|| EvalError::UnknownLabel(v.to_string()))
    };
    let t: Vec<usize> = y_true.iter().map(index).collect::<Result<_, _>>()?;
    let p: Vec<usize> = y_pred.iter().map(index).collect::<Result<_, _>>()?;
    ConfusionMatrix::from_indices(&t, &p, &class_list.iter().map(ToString::to_string).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub macro_f1: f64,
}

pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Result<ClassMetrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let n = cm.counts.len();
    let diag: Vec<usize> = (0..n).map(|i| cm.counts[i][i]).collect();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision: Vec<f64> = (0..n)
        .map(|j| ratio(diag[j], (0..n).map(|i| cm.counts[i][j]).sum()))
        .collect();
    let recall: Vec<f64> = (0..n).map(|i| ratio(diag[i], cm.counts[i].iter().sum())).collect();
    let f1: Vec<f64> = precision
        .iter()
        .zip(&recall)
        .map(|(&p, &r)| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
        .collect();
    Ok(ClassMetrics {
        accuracy: diag.iter().sum::<usize>() as f64 / total as f64,
        macro_f1: f1.iter().sum::<f64>() / n as f64,
        precision,
        recall,
        f1,
    })
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half (Mann-Whitney formulation with mid-ranks).
pub fn auc(scores: &[f64], positive: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != positive.len() {
        return Err(EvalError::LengthMismatch(scores.len(), positive.len()));
    }
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps mid-ranks integral.
    let mut rank2_sum_pos: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share the mid-rank (i + j + 2) / 2.
        let mid2 = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            if positive[k] {
                rank2_sum_pos += mid2;
            }
        }
        i = j + 1;
    }
    let (np, nn) = (n_pos as u64, n_neg as u64);
    let u2 = rank2_sum_pos - np * (np + 1);
    Ok(u2 as f64 / (2 * np * nn) as f64)
}

/// Unweighted one-vs-rest mean over classes that have both positive and
/// negative samples; `None` when no class qualifies. Binary problems use the
/// first class's probability as the score, which gives the same value as
/// one-vs-rest on either class.
pub fn auc_from_proba(proba: &[Vec<f64>], y_true: &[usize], n_classes: usize) -> Option<f64> {
    let per_class = |c: usize| -> Option<f64> {
        let scores: Vec<f64> = proba.iter().map(|p| p[c]).collect();
        let pos: Vec<bool> = y_true.iter().map(|&y| y == c).collect();
        auc(&scores, &pos).ok()
    };
    if n_classes == 2 {
        return per_class(0);
    }
    let vals: Vec<f64> = (0..n_classes).filter_map(per_class).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}
