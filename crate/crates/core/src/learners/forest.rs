//! Random forest: bagged Gini trees with per-node feature subsampling
//! and mean-decrease-in-impurity feature importance.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::learners::tree::{train_tree, TreeNode, TreeParams};
use crate::rng::{self, TAG_TREE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// features sampled per node; None = ceil(sqrt(p))
    pub mtry: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 300,
            mtry: None,
            max_depth: None,
            min_leaf: 1,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub n_features: usize,
    pub params: ForestParams,
    pub seed: u64,
}

/// Trains the forest. Each tree draws its own RNG stream from
/// (seed, tree index), so results do not depend on scheduling.
pub fn train_forest(x: &Matrix, y: &[bool], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    let n = x.n_rows();
    if n < 2 {
        return Err(Error::Param("train_forest: need >= 2 rows".into()));
    }
    if y.len() != n {
        return Err(Error::Param("train_forest: label length mismatch".into()));
    }
    if params.n_trees == 0 {
        return Err(Error::Param("train_forest: n_trees must be >= 1".into()));
    }
    if params.min_leaf == 0 {
        return Err(Error::Param("train_forest: min_leaf must be >= 1".into()));
    }
    let n_pos = y.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::Param("train_forest: both classes required".into()));
    }
    let p = x.n_cols();
    let mtry = match params.mtry {
        Some(0) => return Err(Error::Param("train_forest: mtry must be >= 1".into())),
        Some(m) if m > p => return Err(Error::Param(format!("train_forest: mtry {m} > {p} features"))),
        Some(m) => m,
        None => (p as f64).sqrt().ceil() as usize,
    };
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        mtry: Some(mtry),
    };

    let trees: Vec<TreeNode> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut stream = rng::stream(seed, TAG_TREE, t as u64);
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| stream.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            train_tree(x, y, &idx, &tree_params, &mut stream)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ForestModel {
        trees,
        n_features: p,
        params: params.clone(),
        seed,
    })
}

impl ForestModel {
    /// Mean leaf positive-frequency across trees.
    pub fn predict_scores(&self, x: &Matrix) -> Vec<f64> {
        (0..x.n_rows())
            .map(|r| {
                let row = x.row(r);
                let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
                sum / self.trees.len() as f64
            })
            .collect()
    }
}

/// Mean decrease in impurity: per tree, each internal node contributes
/// (cover/root cover) * impurity_decrease to its split feature; tree
/// vectors are averaged and the result normalized to sum to one. A
/// feature never split on scores exactly zero.
pub fn forest_importance(model: &ForestModel) -> Vec<f64> {
    let p = model.n_features;
    let mut total = vec![0.0; p];
    for tree in &model.trees {
        let root_cover = tree.cover();
        if root_cover == 0.0 {
            continue;
        }
        let mut acc = vec![0.0; p];
        accumulate(tree, root_cover, &mut acc);
        for (t, a) in total.iter_mut().zip(acc.iter()) {
            *t += a / model.trees.len() as f64;
        }
    }
    let sum: f64 = total.iter().sum();
    if sum > 0.0 {
        for v in &mut total {
            *v /= sum;
        }
    }
    total
}

fn accumulate(node: &TreeNode, root_cover: f64, acc: &mut [f64]) {
    if let TreeNode::Internal {
        feature,
        cover,
        impurity_decrease,
        left,
        right,
        ..
    } = node
    {
        acc[*feature] += (cover / root_cover) * impurity_decrease;
        accumulate(left, root_cover, acc);
        accumulate(right, root_cover, acc);
    }
}
