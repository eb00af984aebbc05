//! Discrete AdaBoost (SAMME) over depth-1 stumps, one-vs-rest for more than
//! two classes.

use serde::{Deserialize, Serialize};

use super::AdaBoostParams;
use crate::matrix::Matrix;

/// `feature <= threshold` predicts `left_positive`, otherwise
/// `right_positive`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left_positive: bool,
    pub right_positive: bool,
    pub alpha: f64,
    /// Weighted training error when the stump was selected.
    pub error: f64,
}

impl Stump {
    fn predict(&self, row: &[f64]) -> bool {
        if row[self.feature] <= self.threshold {
            self.left_positive
        } else {
            self.right_positive
        }
    }
}

/// Boosted binary head scoring one class against the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedHead {
    pub positive: usize,
    pub stumps: Vec<Stump>,
    /// Fraction of positive training samples, used when no stump was kept.
    pub prior: f64,
}

impl BoostedHead {
    /// Probability of the positive class: logistic link on the margin
    /// `2 Σ α h(x)` with `h ∈ {−1, +1}`, or the prior without stumps.
    fn score(&self, row: &[f64]) -> f64 {
        if self.stumps.is_empty() {
            return self.prior;
        }
        let margin: f64 = self
            .stumps
            .iter()
            .map(|s| if s.predict(row) { s.alpha } else { -s.alpha })
            .sum();
        1.0 / (1.0 + (-2.0 * margin).exp())
    }
}

/// Weighted majority of a side; ties go to the negative label.
fn side_label(pos: f64, neg: f64) -> bool {
    pos > neg
}

/// Lowest weighted-error stump. Candidates are midpoints between consecutive
/// distinct values; ties resolve to the lowest feature, then the lowest
/// threshold. `None` when every feature is constant.
fn best_stump(x: &Matrix, sorted: &[Vec<usize>], target: &[bool], w: &[f64]) -> Option<(Stump, f64)> {
    let total_pos: f64 = target.iter().zip(w).filter(|(t, _)| **t).map(|(_, w)| w).sum();
    let total_neg: f64 = w.iter().sum::<f64>() - total_pos;
    let mut best: Option<(Stump, f64)> = None;
    for (j, order) in sorted.iter().enumerate() {
        let (mut lp, mut ln) = (0.0, 0.0);
        for k in 0..order.len() - 1 {
            let i = order[k];
            if target[i] {
                lp += w[i];
            } else {
                ln += w[i];
            }
            let (a, b) = (x.get(i, j), x.get(order[k + 1], j));
            if a == b {
                continue;
            }
            let (rp, rn) = (total_pos - lp, total_neg - ln);
            let left = side_label(lp, ln);
            let right = side_label(rp, rn);
            let err = if left { ln } else { lp } + if right { rn } else { rp };
            if best.as_ref().is_none_or(|(_, e)| err < *e) {
                let mut t = a + (b - a) / 2.0;
                if t >= b {
                    t = a;
                }
                best = Some((
                    Stump {
                        feature: j,
                        threshold: t,
                        left_positive: left,
                        right_positive: right,
                        alpha: 0.0,
                        error: err,
                    },
                    err,
                ));
            }
        }
    }
    best
}

fn boost(x: &Matrix, sorted: &[Vec<usize>], target: &[bool], positive: usize, p: &AdaBoostParams) -> BoostedHead {
    let n = target.len();
    let prior = target.iter().filter(|t| **t).count() as f64 / n as f64;
    let mut w = vec![1.0 / n as f64; n];
    let mut stumps = Vec::new();
    for _ in 0..p.n_estimators {
        let Some((mut stump, err)) = best_stump(x, sorted, target, &w) else { break };
        // Guard against float drift making a perfect stump look imperfect.
        let err = err.max(0.0);
        if err >= 0.5 {
            break;
        }
        if err <= 1e-12 {
            stump.alpha = 1.0;
            stump.error = 0.0;
            stumps.push(stump);
            break;
        }
        stump.alpha = p.learning_rate * ((1.0 - err) / err).ln();
        for i in 0..n {
            let wrong = stump.predict(x.row(i)) != target[i];
            if wrong {
                w[i] *= stump.alpha.exp();
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        stumps.push(stump);
    }
    BoostedHead { positive, stumps, prior }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    pub n_classes: usize,
    pub present: Vec<usize>,
    /// One head scoring `present[1]` when two classes are present, one per
    /// present class when more; empty for a single class.
    pub heads: Vec<BoostedHead>,
}

impl AdaBoostModel {
    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, p: &AdaBoostParams) -> Self {
        let present: Vec<usize> = (0..n_classes).filter(|c| y.contains(c)).collect();
        let sorted: Vec<Vec<usize>> = (0..x.cols())
            .map(|j| {
                let mut order: Vec<usize> = (0..x.rows()).collect();
                order.sort_by(|&a, &b| x.get(a, j).total_cmp(&x.get(b, j)).then(a.cmp(&b)));
                order
            })
            .collect();
        let head = |c: usize| {
            let target: Vec<bool> = y.iter().map(|&l| l == c).collect();
            boost(x, &sorted, &target, c, p)
        };
        let heads = match present.len() {
            1 => Vec::new(),
            2 => vec![head(present[1])],
            _ => present.iter().map(|&c| head(c)).collect(),
        };
        Self { n_classes, present, heads }
    }

    pub fn proba(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_classes];
        match self.present.len() {
            1 => out[self.present[0]] = 1.0,
            2 => {
                let p = self.heads[0].score(row);
                out[self.present[1]] = p;
                out[self.present[0]] = 1.0 - p;
            }
            _ => {
                let scores: Vec<f64> = self.heads.iter().map(|h| h.score(row)).collect();
                let total: f64 = scores.iter().sum();
                for (h, s) in self.heads.iter().zip(&scores) {
                    out[h.positive] = if total > 0.0 { s / total } else { 1.0 / scores.len() as f64 };
                }
            }
        }
        out
    }
}
