//! Path-dependent TreeSHAP for the tree ensembles, an exhaustive
//! Shapley oracle for validation, and the report tables built from the
//! attributions.
//!
//! The set function being attributed is v(S) = expected leaf value when
//! features in S follow the explained row and all other splits are taken
//! proportionally to training cover. The polynomial path algorithm and
//! the exponential oracle compute Shapley values of the same v; they
//! must agree to high precision (the oracle is quadratic work in 2^p and
//! is only for validation).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::learners::{TrainedModel, TreeNode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    /// per-sample, per-feature attributions
    pub values: Matrix,
    /// expected model output over the training distribution (cover-weighted)
    pub base_value: f64,
}

/// Cover-weighted expectation of the tree's leaf values.
pub fn tree_expectation(tree: &TreeNode) -> Result<f64> {
    match tree {
        TreeNode::Leaf { value, .. } => Ok(*value),
        TreeNode::Internal {
            cover, left, right, ..
        } => {
            if *cover <= 0.0 {
                return Err(Error::Integrity("tree_shap: zero cover at internal node".into()));
            }
            Ok(left.cover() / cover * tree_expectation(left)?
                + right.cover() / cover * tree_expectation(right)?)
        }
    }
}

#[derive(Debug, Clone)]
struct PathItem {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

fn extend_path(path: &mut Vec<PathItem>, zero: f64, one: f64, feature: Option<usize>) {
    path.push(PathItem {
        feature,
        zero_fraction: zero,
        one_fraction: one,
        pweight: if path.is_empty() { 1.0 } else { 0.0 },
    });
    let d = path.len() - 1;
    for i in (0..d).rev() {
        path[i + 1].pweight += one * path[i].pweight * (i + 1) as f64 / (d + 1) as f64;
        path[i].pweight = zero * path[i].pweight * (d - i) as f64 / (d + 1) as f64;
    }
}

fn unwind_path(path: &mut Vec<PathItem>, k: usize) {
    let d = path.len() - 1;
    let one = path[k].one_fraction;
    let zero = path[k].zero_fraction;
    let mut next_one = path[d].pweight;
    for i in (0..d).rev() {
        if one != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one * (d + 1) as f64 / ((i + 1) as f64 * one);
            next_one = tmp - path[i].pweight * zero * (d - i) as f64 / (d + 1) as f64;
        } else {
            path[i].pweight = path[i].pweight * (d + 1) as f64 / (zero * (d - i) as f64);
        }
    }
    for i in k..d {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

fn unwound_path_sum(path: &[PathItem], k: usize) -> f64 {
    let d = path.len() - 1;
    let one = path[k].one_fraction;
    let zero = path[k].zero_fraction;
    let mut next_one = path[d].pweight;
    let mut total = 0.0;
    if one != 0.0 {
        for i in (0..d).rev() {
            let tmp = next_one / ((i + 1) as f64 * one);
            total += tmp;
            next_one = path[i].pweight - tmp * zero * (d - i) as f64;
        }
    } else {
        for i in (0..d).rev() {
            total += path[i].pweight / (zero * (d - i) as f64);
        }
    }
    total * (d + 1) as f64
}

fn shap_recurse(
    node: &TreeNode,
    x: &[f64],
    phi: &mut [f64],
    mut path: Vec<PathItem>,
    parent_zero: f64,
    parent_one: f64,
    parent_feature: Option<usize>,
) -> Result<()> {
    extend_path(&mut path, parent_zero, parent_one, parent_feature);
    match node {
        TreeNode::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_path_sum(&path, i);
                let item = &path[i];
                phi[item.feature.expect("interior path item has a feature")] +=
                    w * (item.one_fraction - item.zero_fraction) * value;
            }
        }
        TreeNode::Internal {
            feature,
            threshold,
            cover,
            left,
            right,
            ..
        } => {
            if *cover <= 0.0 {
                return Err(Error::Integrity("tree_shap: zero cover at internal node".into()));
            }
            if *feature >= x.len() {
                return Err(Error::Input(format!(
                    "tree_shap: tree uses feature {} but x has {} entries",
                    feature,
                    x.len()
                )));
            }
            let (hot, cold): (&TreeNode, &TreeNode) = if x[*feature] <= *threshold {
                (left, right)
            } else {
                (right, left)
            };
            let hot_zero = hot.cover() / cover;
            let cold_zero = cold.cover() / cover;
            let mut incoming_zero = 1.0;
            let mut incoming_one = 1.0;
            if let Some(k) = (1..path.len()).find(|&i| path[i].feature == Some(*feature)) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind_path(&mut path, k);
            }
            shap_recurse(
                hot,
                x,
                phi,
                path.clone(),
                hot_zero * incoming_zero,
                incoming_one,
                Some(*feature),
            )?;
            shap_recurse(
                cold,
                x,
                phi,
                path,
                cold_zero * incoming_zero,
                0.0,
                Some(*feature),
            )?;
        }
    }
    Ok(())
}

/// Shapley attributions for one tree and one row; returns (phi, base).
/// base + sum(phi) equals the tree's prediction for the row.
pub fn tree_shap(tree: &TreeNode, x: &[f64]) -> Result<(Vec<f64>, f64)> {
    let base = tree_expectation(tree)?;
    let mut phi = vec![0.0; x.len()];
    if matches!(tree, TreeNode::Leaf { .. }) {
        return Ok((phi, base));
    }
    shap_recurse(tree, x, &mut phi, Vec::new(), 1.0, 1.0, None)?;
    Ok((phi, base))
}

const ORACLE_MAX_FEATURES: usize = 20;

/// v(S) for a fixed subset: in-S features follow x, out-of-S branches are
/// cover-weighted.
fn subset_value(node: &TreeNode, x: &[f64], mask: u32) -> f64 {
    match node {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Internal {
            feature,
            threshold,
            cover,
            left,
            right,
            ..
        } => {
            if mask & (1 << feature) != 0 {
                if x[*feature] <= *threshold {
                    subset_value(left, x, mask)
                } else {
                    subset_value(right, x, mask)
                }
            } else {
                left.cover() / cover * subset_value(left, x, mask)
                    + right.cover() / cover * subset_value(right, x, mask)
            }
        }
    }
}

/// Exhaustive Shapley values by 2^p subset enumeration; validation only.
/// Refuses more than 20 features.
pub fn exact_shapley_oracle(tree: &TreeNode, x: &[f64]) -> Result<Vec<f64>> {
    let p = x.len();
    if p > ORACLE_MAX_FEATURES {
        return Err(Error::Param(format!(
            "exact_shapley_oracle: {p} features exceed the 2^p enumeration limit of {ORACLE_MAX_FEATURES}"
        )));
    }
    if let Some(max_f) = tree.max_feature_index() {
        if max_f >= p {
            return Err(Error::Input(format!(
                "exact_shapley_oracle: tree uses feature {max_f} but x has {p} entries"
            )));
        }
    }
    let n_masks = 1usize << p;
    let mut v = vec![0.0; n_masks];
    for (mask, slot) in v.iter_mut().enumerate() {
        *slot = subset_value(tree, x, mask as u32);
    }

    // weight(s) = s! (p-s-1)! / p! = 1 / (p * C(p-1, s))
    let weights: Vec<f64> = (0..p)
        .map(|s| {
            let mut binom = 1.0;
            for i in 0..s {
                binom *= (p - 1 - i) as f64 / (i + 1) as f64;
            }
            1.0 / (p as f64 * binom)
        })
        .collect();

    let mut phi = vec![0.0; p];
    for j in 0..p {
        let bit = 1usize << j;
        for mask in 0..n_masks {
            if mask & bit != 0 {
                continue;
            }
            let s = (mask as u32).count_ones() as usize;
            phi[j] += weights[s] * (v[mask | bit] - v[mask]);
        }
    }
    Ok(phi)
}

/// SHAP for the tree ensembles. Forest attributions live on the
/// probability scale (mean over trees); boosting attributions live on
/// the margin scale (base F0 + lr * summed tree contributions). Linear
/// and KNN models are not explainable here.
pub fn ensemble_shap(model: &TrainedModel, x: &Matrix) -> Result<ShapMatrix> {
    let (trees, scale, offset): (&[TreeNode], f64, f64) = match model {
        TrainedModel::Forest(m) => (&m.trees, 1.0 / m.trees.len() as f64, 0.0),
        TrainedModel::Boost(m) => (&m.trees, m.learning_rate, m.initial),
        _ => {
            return Err(Error::Explain(
                "SHAP explanations support tree models (rf, gb) only".into(),
            ))
        }
    };
    let n_features = model.n_features();
    if x.n_cols() != n_features {
        return Err(Error::Input(format!(
            "ensemble_shap: {} columns given, model expects {}",
            x.n_cols(),
            n_features
        )));
    }

    let mut base_value = offset;
    for tree in trees {
        base_value += scale * tree_expectation(tree)?;
    }

    let rows: Vec<Vec<f64>> = (0..x.n_rows())
        .into_par_iter()
        .map(|r| {
            let row = x.row(r);
            let mut acc = vec![0.0; n_features];
            for tree in trees {
                let (phi, _) = tree_shap(tree, row)?;
                for (a, p) in acc.iter_mut().zip(phi.iter()) {
                    *a += scale * p;
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ShapMatrix {
        values: Matrix::from_rows(&rows)?,
        base_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanAbsRow {
    pub feature: String,
    pub mean_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub row: usize,
    pub feature: String,
    pub rank: usize,
    pub phi: f64,
    pub feature_value: f64,
}

/// Mean |phi| per feature (descending) and per-sample records for the
/// top_n features by that ranking.
pub fn shap_report(
    shap: &ShapMatrix,
    x: &Matrix,
    columns: &[String],
    top_n: usize,
) -> Result<(Vec<MeanAbsRow>, Vec<SummaryRecord>)> {
    let n = shap.values.n_rows();
    let p = shap.values.n_cols();
    if x.n_rows() != n || x.n_cols() != p || columns.len() != p {
        return Err(Error::Param("shap_report: shape mismatch".into()));
    }
    let mut mean_abs: Vec<MeanAbsRow> = (0..p)
        .map(|c| {
            let sum: f64 = (0..n).map(|r| shap.values.get(r, c).abs()).sum();
            MeanAbsRow {
                feature: columns[c].clone(),
                mean_abs: if n > 0 { sum / n as f64 } else { 0.0 },
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        mean_abs[b]
            .mean_abs
            .partial_cmp(&mean_abs[a].mean_abs)
            .unwrap()
            .then_with(|| columns[a].cmp(&columns[b]))
    });
    mean_abs = order.iter().map(|&c| mean_abs[c].clone()).collect();

    let top = top_n.min(p);
    let mut records = Vec::with_capacity(n * top);
    for r in 0..n {
        for (rank, &c) in order[..top].iter().enumerate() {
            records.push(SummaryRecord {
                row: r,
                feature: columns[c].clone(),
                rank: rank + 1,
                phi: shap.values.get(r, c),
                feature_value: x.get(r, c),
            });
        }
    }
    Ok((mean_abs, records))
}
