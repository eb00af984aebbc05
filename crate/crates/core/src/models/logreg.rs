//! L2-regularized logistic regression fitted by batch gradient descent on
//! z-scored features. Multiclass problems use one-vs-rest heads.

use serde::{Deserialize, Serialize};

use super::{LogRegParams, ModelError};
use crate::matrix::Matrix;

/// Per-feature z-score transform fitted on training rows. Zero-variance
/// features get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows() as f64;
        let (mean, scale) = (0..x.cols())
            .map(|j| {
                let col = x.column(j);
                let m = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                let s = var.sqrt();
                (m, if s > 0.0 && s.is_finite() { s } else { 1.0 })
            })
            .unzip();
        Self { mean, scale }
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let rows: Vec<Vec<f64>> = (0..x.rows()).map(|r| self.apply_row(x.row(r))).collect();
        Matrix::from_rows(&rows)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Objective and gradient of one binary head:
/// `L = (1/n) Σ [softplus(z_i) − t_i z_i] + (l2 / 2n) ‖w‖²` with
/// `z_i = w·x_i + b`. The intercept is not penalized.
pub fn loss_and_gradient(x: &Matrix, targets: &[f64], w: &[f64], b: f64, l2: f64) -> (f64, Vec<f64>, f64) {
    let n = x.rows() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; w.len()];
    let mut grad_b = 0.0;
    for (r, &t) in targets.iter().enumerate().take(x.rows()) {
        let row = x.row(r);
        let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        loss += softplus(z) - t * z;
        let resid = sigmoid(z) - t;
        grad_b += resid;
        for (g, v) in grad_w.iter_mut().zip(row) {
            *g += resid * v;
        }
    }
    let norm2: f64 = w.iter().map(|v| v * v).sum();
    loss = loss / n + l2 / (2.0 * n) * norm2;
    for (g, wi) in grad_w.iter_mut().zip(w) {
        *g = *g / n + l2 / n * wi;
    }
    (loss, grad_w, grad_b / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    /// Class scored as positive by this head.
    pub positive: usize,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
}

impl Head {
    fn score(&self, z_row: &[f64]) -> f64 {
        sigmoid(self.intercept + z_row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
    }
}

fn fit_head(x: &Matrix, targets: &[f64], positive: usize, p: &LogRegParams) -> Result<Head, ModelError> {
    let mut w = vec![0.0; x.cols()];
    let mut b = 0.0;
    let mut iterations = 0;
    while iterations < p.max_iters {
        let (loss, gw, gb) = loss_and_gradient(x, targets, &w, b, p.l2);
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss(iterations));
        }
        let max_grad = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if max_grad < p.tol {
            break;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= p.learning_rate * g;
        }
        b -= p.learning_rate * gb;
        iterations += 1;
    }
    if !(b.is_finite() && w.iter().all(|v| v.is_finite())) {
        return Err(ModelError::NonFiniteLoss(iterations));
    }
    Ok(Head {
        positive,
        weights: w,
        intercept: b,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub n_classes: usize,
    pub standardizer: Standardizer,
    /// Classes seen in training, in class order.
    pub present: Vec<usize>,
    /// One head when two classes are present (scoring `present[1]`), one per
    /// present class otherwise; empty when a single class was seen.
    pub heads: Vec<Head>,
}

impl LogRegModel {
    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, p: &LogRegParams) -> Result<Self, ModelError> {
        let standardizer = Standardizer::fit(x);
        let z = standardizer.apply(x);
        let present: Vec<usize> = (0..n_classes).filter(|c| y.contains(c)).collect();
        let targets = |c: usize| -> Vec<f64> { y.iter().map(|&l| f64::from(u8::from(l == c))).collect() };
        let heads = match present.len() {
            1 => Vec::new(),
            2 => vec![fit_head(&z, &targets(present[1]), present[1], p)?],
            _ => present
                .iter()
                .map(|&c| fit_head(&z, &targets(c), c, p))
                .collect::<Result<_, _>>()?,
        };
        Ok(Self {
            n_classes,
            standardizer,
            present,
            heads,
        })
    }

    pub fn proba(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_classes];
        let z = self.standardizer.apply_row(row);
        match self.present.len() {
            1 => out[self.present[0]] = 1.0,
            2 => {
                let p = self.heads[0].score(&z);
                out[self.present[1]] = p;
                out[self.present[0]] = 1.0 - p;
            }
            _ => {
                let scores: Vec<f64> = self.heads.iter().map(|h| h.score(&z)).collect();
                let total: f64 = scores.iter().sum();
                for (h, s) in self.heads.iter().zip(&scores) {
                    out[h.positive] = if total > 0.0 {
                        s / total
                    } else {
                        1.0 / scores.len() as f64
                    };
                }
            }
        }
        out
    }
}
