//! CART trees: Gini classification trees for the forest and
//! squared-error regression trees for boosting. Thresholds sit at
//! midpoints of adjacent sorted distinct values; ties between candidate
//! splits break toward the lower feature index, then the lower threshold.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        /// training samples that reached this node
        cover: f64,
        impurity_decrease: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        cover: f64,
        /// training class counts; (0,0) for regression leaves
        n_neg: f64,
        n_pos: f64,
        value: f64,
    },
}

impl TreeNode {
    pub fn cover(&self) -> f64 {
        match self {
            TreeNode::Internal { cover, .. } | TreeNode::Leaf { cover, .. } => *cover,
        }
    }

    /// Routes x down the tree; values <= threshold go left.
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn max_feature_index(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Internal {
                feature,
                left,
                right,
                ..
            } => {
                let mut m = *feature;
                if let Some(l) = left.max_feature_index() {
                    m = m.max(l);
                }
                if let Some(r) = right.max_feature_index() {
                    m = m.max(r);
                }
                Some(m)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// features sampled per node; None = all
    pub mtry: Option<usize>,
}

struct SplitCandidate {
    feature: usize,
    threshold: f64,
    decrease: f64,
    left_idx: Vec<usize>,
    right_idx: Vec<usize>,
}

fn better(candidate: (f64, usize, f64), best: (f64, usize, f64)) -> bool {
    let (d, f, t) = candidate;
    let (bd, bf, bt) = best;
    d > bd || (d == bd && (f < bf || (f == bf && t < bt)))
}

fn gini(n_pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = n_pos / n;
    2.0 * p * (1.0 - p)
}

/// Exhaustive best Gini split over the sampled features.
fn best_gini_split(
    x: &Matrix,
    y: &[bool],
    idx: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<SplitCandidate> {
    let m = idx.len() as f64;
    let n_pos_total = idx.iter().filter(|&&i| y[i]).count() as f64;
    let parent = gini(n_pos_total, m);
    let mut best: Option<(f64, usize, f64)> = None;

    for &f in features {
        let mut pairs: Vec<(f64, bool)> = idx.iter().map(|&i| (x.get(i, f), y[i])).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut pos_left = 0.0;
        for (i, &(v, label)) in pairs.iter().enumerate().take(pairs.len() - 1) {
            if label {
                pos_left += 1.0;
            }
            let next = pairs[i + 1].0;
            if v == next {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = m - nl;
            if (nl as usize) < min_leaf || (nr as usize) < min_leaf {
                continue;
            }
            let decrease = parent
                - (nl / m) * gini(pos_left, nl)
                - (nr / m) * gini(n_pos_total - pos_left, nr);
            if decrease <= 0.0 {
                continue;
            }
            let threshold = (v + next) / 2.0;
            let cand = (decrease, f, threshold);
            if best.is_none() || better(cand, best.unwrap()) {
                best = Some(cand);
            }
        }
    }

    best.map(|(decrease, feature, threshold)| {
        let (left_idx, right_idx) = partition(x, idx, feature, threshold);
        SplitCandidate {
            feature,
            threshold,
            decrease,
            left_idx,
            right_idx,
        }
    })
}

/// Best squared-error split on the gradient targets.
fn best_sse_split(
    x: &Matrix,
    grad: &[f64],
    idx: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<SplitCandidate> {
    let m = idx.len() as f64;
    let total: f64 = idx.iter().map(|&i| grad[i]).sum();
    let total_sq: f64 = idx.iter().map(|&i| grad[i] * grad[i]).sum();
    let parent_sse = total_sq - total * total / m;
    let mut best: Option<(f64, usize, f64)> = None;

    for &f in features {
        let mut pairs: Vec<(f64, f64)> = idx.iter().map(|&i| (x.get(i, f), grad[i])).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut sum_left = 0.0;
        let mut sq_left = 0.0;
        for (i, &(v, g)) in pairs.iter().enumerate().take(pairs.len() - 1) {
            sum_left += g;
            sq_left += g * g;
            let next = pairs[i + 1].0;
            if v == next {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = m - nl;
            if (nl as usize) < min_leaf || (nr as usize) < min_leaf {
                continue;
            }
            let sse_l = sq_left - sum_left * sum_left / nl;
            let sum_r = total - sum_left;
            let sse_r = (total_sq - sq_left) - sum_r * sum_r / nr;
            let decrease = parent_sse - sse_l - sse_r;
            if decrease <= 0.0 {
                continue;
            }
            let threshold = (v + next) / 2.0;
            let cand = (decrease, f, threshold);
            if best.is_none() || better(cand, best.unwrap()) {
                best = Some(cand);
            }
        }
    }

    best.map(|(decrease, feature, threshold)| {
        let (left_idx, right_idx) = partition(x, idx, feature, threshold);
        SplitCandidate {
            feature,
            threshold,
            decrease,
            left_idx,
            right_idx,
        }
    })
}

fn partition(x: &Matrix, idx: &[usize], feature: usize, threshold: f64) -> (Vec<usize>, Vec<usize>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &i in idx {
        if x.get(i, feature) <= threshold {
            left.push(i);
        } else {
            right.push(i);
        }
    }
    (left, right)
}

fn sample_features(p: usize, mtry: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match mtry {
        Some(k) if k < p => {
            let mut picked: Vec<usize> = sample(rng, p, k).into_iter().collect();
            picked.sort_unstable();
            picked
        }
        _ => (0..p).collect(),
    }
}

fn classification_leaf(y: &[bool], idx: &[usize]) -> TreeNode {
    let n_pos = idx.iter().filter(|&&i| y[i]).count() as f64;
    let n = idx.len() as f64;
    TreeNode::Leaf {
        cover: n,
        n_neg: n - n_pos,
        n_pos,
        value: if n > 0.0 { n_pos / n } else { 0.0 },
    }
}

fn grow_classification(
    x: &Matrix,
    y: &[bool],
    idx: &[usize],
    depth: usize,
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    let n_pos = idx.iter().filter(|&&i| y[i]).count();
    let pure = n_pos == 0 || n_pos == idx.len();
    let depth_reached = params.max_depth.is_some_and(|d| depth >= d);
    if pure || depth_reached || idx.len() < 2 * params.min_leaf.max(1) {
        return classification_leaf(y, idx);
    }
    let features = sample_features(x.n_cols(), params.mtry, rng);
    match best_gini_split(x, y, idx, &features, params.min_leaf) {
        None => classification_leaf(y, idx),
        Some(split) => {
            let left = grow_classification(x, y, &split.left_idx, depth + 1, params, rng);
            let right = grow_classification(x, y, &split.right_idx, depth + 1, params, rng);
            TreeNode::Internal {
                feature: split.feature,
                threshold: split.threshold,
                cover: idx.len() as f64,
                impurity_decrease: split.decrease,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
    }
}

/// Trains a single Gini classification tree on the given rows. Leaves
/// store class frequencies; the leaf value is the positive frequency.
pub fn train_tree(
    x: &Matrix,
    y: &[bool],
    idx: &[usize],
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Result<TreeNode> {
    if idx.is_empty() {
        return Err(Error::Param("train_tree: no rows".into()));
    }
    if x.n_rows() != y.len() {
        return Err(Error::Param("train_tree: label length mismatch".into()));
    }
    Ok(grow_classification(x, y, idx, 0, params, rng))
}

/// Regression tree over gradient/hessian targets; each leaf holds the
/// Newton step sum(grad)/sum(hess) with the denominator floored at 1e-12.
pub fn train_regression_tree(
    x: &Matrix,
    grad: &[f64],
    hess: &[f64],
    idx: &[usize],
    max_depth: usize,
    min_leaf: usize,
) -> TreeNode {
    grow_regression(x, grad, hess, idx, 0, max_depth, min_leaf)
}

const NEWTON_DENOM_FLOOR: f64 = 1e-12;

fn regression_leaf(grad: &[f64], hess: &[f64], idx: &[usize]) -> TreeNode {
    let g: f64 = idx.iter().map(|&i| grad[i]).sum();
    let h: f64 = idx.iter().map(|&i| hess[i]).sum();
    TreeNode::Leaf {
        cover: idx.len() as f64,
        n_neg: 0.0,
        n_pos: 0.0,
        value: g / h.max(NEWTON_DENOM_FLOOR),
    }
}

fn grow_regression(
    x: &Matrix,
    grad: &[f64],
    hess: &[f64],
    idx: &[usize],
    depth: usize,
    max_depth: usize,
    min_leaf: usize,
) -> TreeNode {
    if depth >= max_depth || idx.len() < 2 * min_leaf.max(1) {
        return regression_leaf(grad, hess, idx);
    }
    let features: Vec<usize> = (0..x.n_cols()).collect();
    match best_sse_split(x, grad, idx, &features, min_leaf) {
        None => regression_leaf(grad, hess, idx),
        Some(split) => {
            let left = grow_regression(x, grad, hess, &split.left_idx, depth + 1, max_depth, min_leaf);
            let right =
                grow_regression(x, grad, hess, &split.right_idx, depth + 1, max_depth, min_leaf);
            TreeNode::Internal {
                feature: split.feature,
                threshold: split.threshold,
                cover: idx.len() as f64,
                impurity_decrease: split.decrease,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn full_params() -> TreeParams {
        TreeParams {
            max_depth: None,
            min_leaf: 1,
            mtry: None,
        }
    }

    #[test]
    fn pure_input_is_a_single_leaf() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let y = vec![true, true, true];
        let idx = [0, 1, 2];
        let mut r = rng::stream(0, rng::TAG_TREE, 0);
        let tree = train_tree(&x, &y, &idx, &full_params(), &mut r).unwrap();
        match tree {
            TreeNode::Leaf { n_neg, n_pos, value, .. } => {
                assert_eq!((n_neg, n_pos), (0.0, 3.0));
                assert_eq!(value, 1.0);
            }
            _ => panic!("expected single leaf"),
        }
    }

    #[test]
    fn one_dimensional_split_lands_at_midpoint() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        let y = vec![false, false, true, true];
        let idx = [0, 1, 2, 3];
        let mut r = rng::stream(0, rng::TAG_TREE, 0);
        let tree = train_tree(&x, &y, &idx, &full_params(), &mut r).unwrap();
        match &tree {
            TreeNode::Internal { feature, threshold, impurity_decrease, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 2.5);
                // perfect split: decrease equals parent gini 0.5
                assert!((impurity_decrease - 0.5).abs() < 1e-12);
            }
            _ => panic!("expected internal root"),
        }
        for (i, want) in [0.0, 0.0, 1.0, 1.0].iter().enumerate() {
            assert_eq!(tree.predict(x.row(i)), *want);
        }
    }

    #[test]
    fn xor_with_depth_one_stays_at_chance() {
        let x = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let y = vec![false, true, true, false];
        let idx = [0, 1, 2, 3];
        let params = TreeParams {
            max_depth: Some(1),
            min_leaf: 1,
            mtry: None,
        };
        let mut r = rng::stream(0, rng::TAG_TREE, 0);
        let tree = train_tree(&x, &y, &idx, &params, &mut r).unwrap();
        let correct = (0..4)
            .filter(|&i| (tree.predict(x.row(i)) >= 0.5) == y[i])
            .count();
        assert_eq!(correct, 2, "depth-1 tree cannot beat chance on XOR");
    }

    #[test]
    fn cover_adds_up_and_decrease_non_negative() {
        let x = Matrix::from_rows(&[
            vec![1.0, 5.0],
            vec![2.0, 1.0],
            vec![3.0, 4.0],
            vec![4.0, 2.0],
            vec![5.0, 3.0],
        ])
        .unwrap();
        let y = vec![false, true, false, true, true];
        let idx = [0, 1, 2, 3, 4];
        let mut r = rng::stream(3, rng::TAG_TREE, 0);
        let tree = train_tree(&x, &y, &idx, &full_params(), &mut r).unwrap();
        fn walk(node: &TreeNode) {
            if let TreeNode::Internal {
                cover,
                left,
                right,
                impurity_decrease,
                ..
            } = node
            {
                assert_eq!(*cover, left.cover() + right.cover());
                assert!(*impurity_decrease >= 0.0);
                walk(left);
                walk(right);
            }
        }
        walk(&tree);
        assert_eq!(tree.cover(), 5.0);
    }

    #[test]
    fn no_valid_split_gives_single_leaf() {
        // identical feature vectors, mixed labels: nothing to split on
        let x = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let y = vec![true, false, true];
        let idx = [0, 1, 2];
        let mut r = rng::stream(0, rng::TAG_TREE, 0);
        let tree = train_tree(&x, &y, &idx, &full_params(), &mut r).unwrap();
        match tree {
            TreeNode::Leaf { value, .. } => assert!((value - 2.0 / 3.0).abs() < 1e-12),
            _ => panic!("expected leaf"),
        }
    }

    #[test]
    fn regression_tree_fits_step_function() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        let grad = vec![-1.0, -1.0, 1.0, 1.0];
        let hess = vec![1.0, 1.0, 1.0, 1.0];
        let tree = train_regression_tree(&x, &grad, &hess, &[0, 1, 2, 3], 3, 1);
        assert_eq!(tree.predict(&[1.5]), -1.0);
        assert_eq!(tree.predict(&[3.7]), 1.0);
    }
}
