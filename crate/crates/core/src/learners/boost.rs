//! Gradient boosting with binomial log-loss: depth-limited regression
//! trees fit to residuals, Newton leaf steps, shrinkage by the learning
//! rate. Scores are sigmoid of the accumulated margin.

use serde::{Deserialize, Serialize};

use crate::data::{sigmoid, Matrix};
use crate::error::{Error, Result};
use crate::learners::tree::{train_regression_tree, TreeNode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub depth: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            rounds: 200,
            learning_rate: 0.1,
            depth: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    /// initial log-odds of the base rate
    pub initial: f64,
    pub trees: Vec<TreeNode>,
    pub learning_rate: f64,
    pub n_features: usize,
    /// training log-loss before round 1 and after each round
    pub loss_trace: Vec<f64>,
}

pub fn log_loss(y: &[bool], margins: &[f64]) -> f64 {
    let n = y.len() as f64;
    y.iter()
        .zip(margins.iter())
        .map(|(&label, &f)| {
            let p = sigmoid(f).clamp(1e-15, 1.0 - 1e-15);
            if label {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / n
}

pub fn train_gboost(x: &Matrix, y: &[bool], params: &BoostParams) -> Result<BoostModel> {
    let n = x.n_rows();
    if y.len() != n {
        return Err(Error::Param("train_gboost: label length mismatch".into()));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(Error::Param(format!(
            "train_gboost: learning rate must be in (0,1], got {}",
            params.learning_rate
        )));
    }
    if params.depth == 0 {
        return Err(Error::Param("train_gboost: depth must be >= 1".into()));
    }
    let n_pos = y.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::Param("train_gboost: both classes required".into()));
    }

    let p_bar = n_pos as f64 / n as f64;
    let initial = (p_bar / (1.0 - p_bar)).ln();
    let mut margins = vec![initial; n];
    let idx: Vec<usize> = (0..n).collect();

    let mut trees = Vec::with_capacity(params.rounds);
    let mut loss_trace = Vec::with_capacity(params.rounds + 1);
    loss_trace.push(log_loss(y, &margins));
    for _ in 0..params.rounds {
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = (y[i] as u8 as f64) - p;
            hess[i] = p * (1.0 - p);
        }
        let tree = train_regression_tree(x, &grad, &hess, &idx, params.depth, 1);
        for i in 0..n {
            margins[i] += params.learning_rate * tree.predict(x.row(i));
        }
        trees.push(tree);
        loss_trace.push(log_loss(y, &margins));
    }

    Ok(BoostModel {
        initial,
        trees,
        learning_rate: params.learning_rate,
        n_features: x.n_cols(),
        loss_trace,
    })
}

impl BoostModel {
    pub fn margins(&self, x: &Matrix) -> Vec<f64> {
        (0..x.n_rows())
            .map(|r| {
                let row = x.row(r);
                self.initial
                    + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
            })
            .collect()
    }

    pub fn predict_scores(&self, x: &Matrix) -> Vec<f64> {
        self.margins(x).into_iter().map(sigmoid).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable_1d() -> (Matrix, Vec<bool>) {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 5.0]).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn zero_rounds_predicts_base_rate() {
        let (x, y) = separable_1d();
        let model = train_gboost(
            &x,
            &y,
            &BoostParams {
                rounds: 0,
                ..BoostParams::default()
            },
        )
        .unwrap();
        let scores = model.predict_scores(&x);
        for s in scores {
            assert!((s - 0.5).abs() < 1e-12); // base rate is 10/20
        }
    }

    #[test]
    fn training_loss_never_increases() {
        let (x, y) = separable_1d();
        let model = train_gboost(
            &x,
            &y,
            &BoostParams {
                rounds: 60,
                ..BoostParams::default()
            },
        )
        .unwrap();
        for w in model.loss_trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12,
                "loss increased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn separable_data_reaches_perfect_training_accuracy() {
        let (x, y) = separable_1d();
        let model = train_gboost(
            &x,
            &y,
            &BoostParams {
                rounds: 50,
                ..BoostParams::default()
            },
        )
        .unwrap();
        let scores = model.predict_scores(&x);
        for (s, &label) in scores.iter().zip(y.iter()) {
            assert_eq!(*s >= 0.5, label);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let (x, y) = separable_1d();
        assert!(train_gboost(
            &x,
            &y,
            &BoostParams {
                learning_rate: 0.0,
                ..BoostParams::default()
            }
        )
        .is_err());
        assert!(train_gboost(
            &x,
            &y,
            &BoostParams {
                depth: 0,
                ..BoostParams::default()
            }
        )
        .is_err());
        assert!(train_gboost(&x, &vec![true; 20], &BoostParams::default()).is_err());
    }
}
