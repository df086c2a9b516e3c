//! The preprocessing chain: aggregate/pivot, sparse-column filter,
//! stratified split, and the train-fitted transforms (impute, one-hot,
//! scale). Everything fitted is fitted on training rows only.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cohort::CohortRecord;
use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng::{self, TAG_SPLIT};
use crate::schema::EventRow;

pub const STAT_SUFFIXES: [&str; 4] = ["min", "max", "avg", "median"];

/// Per-item aggregation statistics, in the fixed column order.
fn aggregate_values(values: &mut Vec<f64>) -> [f64; 4] {
    debug_assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    let min = values[0];
    let max = values[n - 1];
    let avg = values.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    };
    [min, max, avg, median]
}

/// Aggregates the merged event stream per (patient, item) into
/// `<name>_min/_max/_avg/_median` columns and pivots to one row per
/// cohort patient. Demographics (`patient_age`, gender, ethnicity) come
/// from the cohort records. Pairs with no events stay masked.
pub fn aggregate_and_pivot(
    events: &[EventRow],
    cohort: &[CohortRecord],
    item_names: &BTreeMap<i64, String>,
) -> Result<FeatureMatrix> {
    let subject_pos: HashMap<i64, usize> = cohort
        .iter()
        .enumerate()
        .map(|(i, c)| (c.subject_id, i))
        .collect();

    // bucket values per (subject slot, itemid)
    let mut buckets: HashMap<(usize, i64), Vec<f64>> = HashMap::new();
    let mut item_ids: Vec<i64> = Vec::new();
    let mut seen_items: HashSet<i64> = HashSet::new();
    for ev in events {
        let Some(&slot) = subject_pos.get(&ev.subject_id) else {
            return Err(Error::Integrity(format!(
                "event subject {} not in cohort",
                ev.subject_id
            )));
        };
        if seen_items.insert(ev.itemid) {
            item_ids.push(ev.itemid);
        }
        buckets.entry((slot, ev.itemid)).or_default().push(ev.valuenum);
    }
    item_ids.sort_unstable();

    // column names: item stats in itemid order, then patient_age
    let mut used_names: HashSet<String> = HashSet::new();
    let mut columns: Vec<String> = Vec::with_capacity(item_ids.len() * 4 + 1);
    let mut display: Vec<String> = Vec::with_capacity(item_ids.len());
    for &id in &item_ids {
        let mut base = item_names
            .get(&id)
            .cloned()
            .unwrap_or_else(|| format!("item_{id}"));
        if !used_names.insert(base.clone()) {
            base = format!("{base}_{id}");
            used_names.insert(base.clone());
        }
        for suffix in STAT_SUFFIXES {
            columns.push(format!("{base}_{suffix}"));
        }
        display.push(base);
    }
    columns.push("patient_age".to_string());

    let mut matrix = FeatureMatrix::new(columns, vec!["gender".into(), "ethnicity".into()]);
    let n_items = item_ids.len();
    for (slot, rec) in cohort.iter().enumerate() {
        let mut row: Vec<Option<f64>> = vec![None; n_items * 4 + 1];
        for (j, &id) in item_ids.iter().enumerate() {
            if let Some(values) = buckets.get_mut(&(slot, id)) {
                let stats = aggregate_values(values);
                for (s, stat) in stats.into_iter().enumerate() {
                    row[j * 4 + s] = Some(stat);
                }
            }
        }
        row[n_items * 4] = Some(rec.age_years);
        matrix.push_row(
            rec.subject_id,
            rec.label,
            &row,
            &[rec.gender.clone(), rec.ethnicity.clone()],
        );
    }
    Ok(matrix)
}

/// Drops numeric columns whose missing fraction reaches `threshold`
/// (a column exactly at the threshold is dropped).
pub fn drop_sparse(matrix: &FeatureMatrix, threshold: f64) -> Result<FeatureMatrix> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Param(format!(
            "missing threshold must be in (0,1], got {threshold}"
        )));
    }
    let keep: Vec<usize> = (0..matrix.n_cols())
        .filter(|&c| matrix.missing_fraction(c) < threshold)
        .collect();
    if keep.is_empty() && matrix.n_cat_cols() == 0 {
        return Err(Error::Pipeline("no features remain".into()));
    }
    Ok(matrix.select_columns(&keep))
}

/// Stratified train/test split: |train| = round(ratio*n) with per-class
/// proportional allocation. Deterministic given the seed.
pub fn stratified_split(
    matrix: &FeatureMatrix,
    ratio: f64,
    seed: u64,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Param(format!("split ratio must be in (0,1), got {ratio}")));
    }
    let n = matrix.n_rows();
    let mut pos: Vec<usize> = Vec::new();
    let mut neg: Vec<usize> = Vec::new();
    for (i, &label) in matrix.labels.iter().enumerate() {
        if label {
            pos.push(i)
        } else {
            neg.push(i)
        }
    }
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::Split(format!(
            "each class needs >= 2 members ({} positive, {} negative)",
            pos.len(),
            neg.len()
        )));
    }

    let n_train = (ratio * n as f64).round() as usize;
    let mut n_train_pos = (ratio * pos.len() as f64).round() as usize;
    n_train_pos = n_train_pos.min(n_train).min(pos.len());
    let mut n_train_neg = n_train - n_train_pos;
    if n_train_neg > neg.len() {
        // rebalance overflow back onto the positive class
        n_train_pos += n_train_neg - neg.len();
        n_train_neg = neg.len();
        n_train_pos = n_train_pos.min(pos.len());
    }

    pos.shuffle(&mut rng::stream(seed, TAG_SPLIT, 0));
    neg.shuffle(&mut rng::stream(seed, TAG_SPLIT, 1));

    let mut train_idx: Vec<usize> = Vec::with_capacity(n_train);
    train_idx.extend_from_slice(&pos[..n_train_pos]);
    train_idx.extend_from_slice(&neg[..n_train_neg]);
    let mut test_idx: Vec<usize> = Vec::with_capacity(n - n_train);
    test_idx.extend_from_slice(&pos[n_train_pos..]);
    test_idx.extend_from_slice(&neg[n_train_neg..]);
    // keep original row order within each side
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Split("split left one side empty".into()));
    }
    Ok((matrix.take_rows(&train_idx), matrix.take_rows(&test_idx)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub column: String,
    pub mean: f64,
    pub sd: f64,
}

/// Everything fitted on the training rows; applying these to any data
/// never re-estimates anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PreprocessParams {
    /// (column, training mean) for every column imputed.
    pub impute_means: Vec<(String, f64)>,
    /// Columns dropped because they were fully missing in training.
    pub dropped_fully_missing: Vec<String>,
    /// (token column, sorted training vocabulary).
    pub vocabulary: Vec<(String, Vec<String>)>,
    /// z-score parameters (population sd) for every retained column.
    pub scale: Vec<ScaleEntry>,
    /// Columns dropped for zero variance in training.
    pub dropped_zero_variance: Vec<String>,
    /// Final column list after impute + encode + scale.
    pub retained_columns: Vec<String>,
}

/// Fills missing cells with training-column means. Columns fully missing
/// in training are dropped from both sets and recorded.
pub fn fit_apply_impute(
    train: &FeatureMatrix,
    test: &FeatureMatrix,
) -> Result<(FeatureMatrix, FeatureMatrix, Vec<(String, f64)>, Vec<String>)> {
    if train.n_rows() == 0 {
        return Err(Error::Param("impute: empty training set".into()));
    }
    let mut keep: Vec<usize> = Vec::new();
    let mut means: Vec<(String, f64)> = Vec::new();
    let mut dropped: Vec<String> = Vec::new();
    for c in 0..train.n_cols() {
        let mut sum = 0.0;
        let mut count = 0usize;
        for r in 0..train.n_rows() {
            if train.observed(r, c) {
                sum += train.value(r, c);
                count += 1;
            }
        }
        if count == 0 {
            dropped.push(train.columns[c].clone());
        } else {
            keep.push(c);
            means.push((train.columns[c].clone(), sum / count as f64));
        }
    }
    let mut train_out = train.select_columns(&keep);
    let mut test_out = test.select_columns(&keep);
    for (c, (_, mean)) in means.iter().enumerate() {
        for r in 0..train_out.n_rows() {
            if !train_out.observed(r, c) {
                train_out.set_value(r, c, *mean);
            }
        }
        for r in 0..test_out.n_rows() {
            if !test_out.observed(r, c) {
                test_out.set_value(r, c, *mean);
            }
        }
    }
    Ok((train_out, test_out, means, dropped))
}

/// One indicator column per training-set category (`col=token`); test
/// tokens outside the vocabulary map to all zeros. Token columns are
/// removed afterwards.
pub fn encode_categoricals(
    train: &FeatureMatrix,
    test: &FeatureMatrix,
) -> Result<(FeatureMatrix, FeatureMatrix, Vec<(String, Vec<String>)>)> {
    let mut train_out = train.clone();
    let mut test_out = test.clone();
    let mut vocabulary = Vec::new();
    for c in 0..train.n_cat_cols() {
        let name = train.cat_columns[c].clone();
        let mut tokens: Vec<String> = train
            .subject_ids
            .iter()
            .enumerate()
            .map(|(r, _)| train.cat(r, c).to_string())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        tokens.sort();
        for token in &tokens {
            let col_name = format!("{name}={token}");
            let train_col: Vec<f64> = (0..train.n_rows())
                .map(|r| if train.cat(r, c) == token { 1.0 } else { 0.0 })
                .collect();
            let test_col: Vec<f64> = (0..test.n_rows())
                .map(|r| if test.cat(r, c) == token { 1.0 } else { 0.0 })
                .collect();
            train_out.push_column(col_name.clone(), &train_col);
            test_out.push_column(col_name, &test_col);
        }
        vocabulary.push((name, tokens));
    }
    train_out.clear_categoricals();
    test_out.clear_categoricals();
    Ok((train_out, test_out, vocabulary))
}

const ZERO_VARIANCE_EPS: f64 = 1e-12;

/// Z-score standardization with population (divide-by-n) standard
/// deviation fitted on training rows. Zero-variance training columns are
/// dropped from both sets.
pub fn fit_apply_scale(
    train: &FeatureMatrix,
    test: &FeatureMatrix,
) -> Result<(FeatureMatrix, FeatureMatrix, Vec<ScaleEntry>, Vec<String>)> {
    let n = train.n_rows();
    if n == 0 {
        return Err(Error::Param("scale: empty training set".into()));
    }
    let mut keep: Vec<usize> = Vec::new();
    let mut entries: Vec<ScaleEntry> = Vec::new();
    let mut dropped: Vec<String> = Vec::new();
    for c in 0..train.n_cols() {
        let mut sum = 0.0;
        for r in 0..n {
            sum += train.value(r, c);
        }
        let mean = sum / n as f64;
        let mut ss = 0.0;
        for r in 0..n {
            let d = train.value(r, c) - mean;
            ss += d * d;
        }
        let sd = (ss / n as f64).sqrt();
        if sd <= ZERO_VARIANCE_EPS * mean.abs().max(1.0) {
            dropped.push(train.columns[c].clone());
        } else {
            keep.push(c);
            entries.push(ScaleEntry {
                column: train.columns[c].clone(),
                mean,
                sd,
            });
        }
    }
    let mut train_out = train.select_columns(&keep);
    let mut test_out = test.select_columns(&keep);
    for (c, e) in entries.iter().enumerate() {
        for r in 0..train_out.n_rows() {
            let v = (train_out.value(r, c) - e.mean) / e.sd;
            train_out.set_value(r, c, v);
        }
        for r in 0..test_out.n_rows() {
            let v = (test_out.value(r, c) - e.mean) / e.sd;
            test_out.set_value(r, c, v);
        }
    }
    Ok((train_out, test_out, entries, dropped))
}

/// Runs impute -> one-hot -> scale, returning dense matrices and the
/// fitted parameters.
pub fn fit_preprocess(
    train: &FeatureMatrix,
    test: &FeatureMatrix,
) -> Result<(FeatureMatrix, FeatureMatrix, PreprocessParams)> {
    let (train, test, impute_means, dropped_fully_missing) = fit_apply_impute(train, test)?;
    let (train, test, vocabulary) = encode_categoricals(&train, &test)?;
    let (train, test, scale, dropped_zero_variance) = fit_apply_scale(&train, &test)?;
    let params = PreprocessParams {
        impute_means,
        dropped_fully_missing,
        vocabulary,
        scale,
        dropped_zero_variance,
        retained_columns: train.columns.clone(),
    };
    Ok((train, test, params))
}

/// Applies previously fitted parameters to new rows (no refitting).
pub fn apply_preprocess(matrix: &FeatureMatrix, params: &PreprocessParams) -> Result<Matrix> {
    let n = matrix.n_rows();
    let mut columns: HashMap<&str, Vec<f64>> = HashMap::new();
    for (name, mean) in &params.impute_means {
        let Some(c) = matrix.column_index(name) else {
            return Err(Error::Integrity(format!("apply_preprocess: column {name} absent")));
        };
        let col: Vec<f64> = (0..n)
            .map(|r| if matrix.observed(r, c) { matrix.value(r, c) } else { *mean })
            .collect();
        columns.insert(name.as_str(), col);
    }
    let mut onehot: HashMap<String, Vec<f64>> = HashMap::new();
    for (cat_name, tokens) in &params.vocabulary {
        let Some(c) = matrix.cat_columns.iter().position(|x| x == cat_name) else {
            return Err(Error::Integrity(format!(
                "apply_preprocess: token column {cat_name} absent"
            )));
        };
        for token in tokens {
            let col: Vec<f64> = (0..n)
                .map(|r| if matrix.cat(r, c) == token { 1.0 } else { 0.0 })
                .collect();
            onehot.insert(format!("{cat_name}={token}"), col);
        }
    }
    let mut out = Matrix::zeros(n, params.scale.len());
    for (j, e) in params.scale.iter().enumerate() {
        let col = columns
            .get(e.column.as_str())
            .or_else(|| onehot.get(&e.column))
            .ok_or_else(|| {
                Error::Integrity(format!("apply_preprocess: no source for column {}", e.column))
            })?;
        for r in 0..n {
            out.set(r, j, (col[r] - e.mean) / e.sd);
        }
    }
    Ok(out)
}

/// Indices of the k most important columns: importance descending, ties
/// broken by lexicographically smaller name.
pub fn top_k_order(columns: &[String], importances: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Param("select_top_k: k must be positive".into()));
    }
    if importances.len() != columns.len() {
        return Err(Error::Param(format!(
            "select_top_k: {} importances for {} columns",
            importances.len(),
            columns.len()
        )));
    }
    if k > columns.len() {
        return Err(Error::Param(format!(
            "select_top_k: k={} exceeds column count {}",
            k,
            columns.len()
        )));
    }
    let mut order: Vec<usize> = (0..columns.len()).collect();
    order.sort_by(|&a, &b| {
        importances[b]
            .partial_cmp(&importances[a])
            .unwrap()
            .then_with(|| columns[a].cmp(&columns[b]))
    });
    order.truncate(k);
    Ok(order)
}

/// Retains the k columns of a feature matrix with the largest importance.
pub fn select_top_k(
    matrix: &FeatureMatrix,
    importances: &[f64],
    k: usize,
) -> Result<FeatureMatrix> {
    let order = top_k_order(&matrix.columns, importances, k)?;
    Ok(matrix.select_columns(&order))
}
