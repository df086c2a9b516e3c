//! Linear models: logistic regression by full-batch gradient descent on
//! the mean log-loss, and a linear SVM by subgradient descent on the
//! mean hinge loss. Both carry an L2 penalty on the weights (not the
//! bias) and anneal the step as step/sqrt(epoch).

use serde::{Deserialize, Serialize};

use crate::data::{sigmoid, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Logistic,
    Svm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearParams {
    pub epochs: usize,
    pub step: f64,
    pub l2: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams {
            epochs: 500,
            step: 0.1,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub kind: LinearKind,
}

impl LinearModel {
    pub fn margins(&self, x: &Matrix) -> Vec<f64> {
        (0..x.n_rows())
            .map(|r| {
                let row = x.row(r);
                row.iter().zip(self.weights.iter()).map(|(a, b)| a * b).sum::<f64>() + self.bias
            })
            .collect()
    }

    /// Probability-style scores: the logistic output, or sigmoid of the
    /// SVM margin (rank-equivalent to the margin itself).
    pub fn predict_scores(&self, x: &Matrix) -> Vec<f64> {
        self.margins(x).into_iter().map(sigmoid).collect()
    }
}

/// Mean log-loss + (l2/2)||w||^2 and its gradient at (w, b).
pub fn logistic_objective(
    x: &Matrix,
    y: &[bool],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = x.n_rows();
    let nf = n as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; x.n_cols()];
    let mut grad_b = 0.0;
    for r in 0..n {
        let row = x.row(r);
        let margin: f64 =
            row.iter().zip(weights.iter()).map(|(a, b)| a * b).sum::<f64>() + bias;
        let p = sigmoid(margin);
        let target = y[r] as u8 as f64;
        let pc = p.clamp(1e-15, 1.0 - 1e-15);
        loss += if y[r] { -pc.ln() } else { -(1.0 - pc).ln() };
        let delta = p - target;
        for (g, &v) in grad_w.iter_mut().zip(row.iter()) {
            *g += delta * v;
        }
        grad_b += delta;
    }
    loss /= nf;
    grad_b /= nf;
    let mut penalty = 0.0;
    for (g, &w) in grad_w.iter_mut().zip(weights.iter()) {
        *g = *g / nf + l2 * w;
        penalty += w * w;
    }
    (loss + 0.5 * l2 * penalty, grad_w, grad_b)
}

/// Mean hinge loss + (l2/2)||w||^2 and a subgradient at (w, b). Labels
/// are mapped to -1/+1 internally.
pub fn hinge_objective(
    x: &Matrix,
    y: &[bool],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = x.n_rows();
    let nf = n as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; x.n_cols()];
    let mut grad_b = 0.0;
    for r in 0..n {
        let row = x.row(r);
        let s = if y[r] { 1.0 } else { -1.0 };
        let margin: f64 =
            row.iter().zip(weights.iter()).map(|(a, b)| a * b).sum::<f64>() + bias;
        let m = s * margin;
        if m < 1.0 {
            loss += 1.0 - m;
            for (g, &v) in grad_w.iter_mut().zip(row.iter()) {
                *g -= s * v;
            }
            grad_b -= s;
        }
    }
    loss /= nf;
    grad_b /= nf;
    let mut penalty = 0.0;
    for (g, &w) in grad_w.iter_mut().zip(weights.iter()) {
        *g = *g / nf + l2 * w;
        penalty += w * w;
    }
    (loss + 0.5 * l2 * penalty, grad_w, grad_b)
}

fn descend(
    x: &Matrix,
    y: &[bool],
    params: &LinearParams,
    kind: LinearKind,
    objective: fn(&Matrix, &[bool], &[f64], f64, f64) -> (f64, Vec<f64>, f64),
) -> Result<LinearModel> {
    if x.n_rows() == 0 {
        return Err(Error::Param("linear training: no rows".into()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::Param("linear training: label length mismatch".into()));
    }
    let mut weights = vec![0.0; x.n_cols()];
    let mut bias = 0.0;
    for epoch in 1..=params.epochs {
        let (_, grad_w, grad_b) = objective(x, y, &weights, bias, params.l2);
        let step = params.step / (epoch as f64).sqrt();
        for (w, g) in weights.iter_mut().zip(grad_w.iter()) {
            *w -= step * g;
        }
        bias -= step * grad_b;
    }
    Ok(LinearModel {
        weights,
        bias,
        kind,
    })
}

pub fn train_logistic(x: &Matrix, y: &[bool], params: &LinearParams) -> Result<LinearModel> {
    descend(x, y, params, LinearKind::Logistic, logistic_objective)
}

pub fn train_svm(x: &Matrix, y: &[bool], params: &LinearParams) -> Result<LinearModel> {
    descend(x, y, params, LinearKind::Svm, hinge_objective)
}
