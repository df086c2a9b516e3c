//! Stratified k-fold cross-validation with the full preprocessing chain
//! (impute, encode, scale, SMOTE) refit inside every training fold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{fit_preprocess, smote_balance, FeatureMatrix};
use crate::learners::{predict_scores, train_model, ModelFamily, TrainConfig};
use crate::eval::auroc::auroc;
use crate::eval::metrics::confusion_and_metrics;
use crate::rng::{self, TAG_FOLD};
use rand::seq::SliceRandom;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// None when the test fold contains a single class
    pub auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<FoldMetrics>,
    pub mean_accuracy: f64,
    pub sd_accuracy: f64,
    pub mean_auroc: Option<f64>,
    pub sd_auroc: Option<f64>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Stratified fold assignment: each class's indices are shuffled and
/// dealt round-robin, carrying the fold cursor across classes so every
/// fold is populated. Per-fold class counts differ by at most one.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    if folds < 2 {
        return Err(Error::Param("cross_validate: folds must be >= 2".into()));
    }
    if folds > n {
        return Err(Error::Param(format!(
            "cross_validate: folds {folds} exceed {n} rows"
        )));
    }
    let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..n).filter(|&i| !labels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Param("cross_validate: both classes required".into()));
    }
    pos.shuffle(&mut rng::stream(seed, TAG_FOLD, 0));
    neg.shuffle(&mut rng::stream(seed, TAG_FOLD, 1));

    let mut assignment = vec![Vec::new(); folds];
    let mut cursor = 0usize;
    for class in [&pos, &neg] {
        for &i in class.iter() {
            assignment[cursor % folds].push(i);
            cursor += 1;
        }
    }
    for fold in &mut assignment {
        fold.sort_unstable();
    }
    Ok(assignment)
}

/// Per-fold metrics for one model family, plus mean and sample sd across
/// folds. Deterministic given the seed.
pub fn cross_validate(
    matrix: &FeatureMatrix,
    family: ModelFamily,
    cfg: &TrainConfig,
    smote_k: usize,
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    let assignment = stratified_folds(&matrix.labels, folds, seed)?;
    let n = matrix.n_rows();

    let mut fold_metrics = Vec::with_capacity(folds);
    for (f, test_idx) in assignment.iter().enumerate() {
        let in_test = {
            let mut mask = vec![false; n];
            for &i in test_idx {
                mask[i] = true;
            }
            mask
        };
        let train_idx: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
        let train = matrix.take_rows(&train_idx);
        let test = matrix.take_rows(test_idx);

        let (train_pp, test_pp, _params) = fit_preprocess(&train, &test)?;
        let x_train = train_pp.to_dense()?;
        let x_test = test_pp.to_dense()?;
        let fold_seed = rng::derive_seed(seed, TAG_FOLD, 100 + f as u64);
        let (x_bal, y_bal) = smote_balance(&x_train, &train_pp.labels, smote_k, fold_seed)?;

        let mut fold_cfg = cfg.clone();
        fold_cfg.seed = fold_seed;
        let model = train_model(family, &x_bal, &y_bal, &fold_cfg)?;
        let scores = predict_scores(&model, &x_test)?;
        let preds: Vec<bool> = scores.iter().map(|&s| s >= 0.5).collect();
        let (_, m) = confusion_and_metrics(&test_pp.labels, &preds, true)?;
        let fold_auroc = if test_pp.labels.iter().any(|&l| l) && test_pp.labels.iter().any(|&l| !l)
        {
            Some(auroc(&scores, &test_pp.labels)?)
        } else {
            None
        };
        fold_metrics.push(FoldMetrics {
            fold: f,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            auroc: fold_auroc,
        });
    }

    let accs: Vec<f64> = fold_metrics.iter().map(|m| m.accuracy).collect();
    let (mean_accuracy, sd_accuracy) = mean_sd(&accs);
    let aucs: Vec<f64> = fold_metrics.iter().filter_map(|m| m.auroc).collect();
    let (mean_auroc, sd_auroc) = if aucs.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_sd(&aucs);
        (Some(m), Some(s))
    };

    Ok(CvResult {
        folds: fold_metrics,
        mean_accuracy,
        sd_accuracy,
        mean_auroc,
        sd_auroc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::BoostParams;

    fn fixture(n: usize, positives: usize) -> FeatureMatrix {
        let mut m = FeatureMatrix::new(vec!["x".into(), "y".into()], vec![]);
        for i in 0..n {
            let label = i < positives;
            let base = if label { 3.0 } else { -3.0 };
            m.push_row(
                i as i64,
                label,
                &[
                    Some(base + (i as f64 * 0.37).sin()),
                    Some((i as f64 * 0.73).cos()),
                ],
                &[],
            );
        }
        m
    }

    #[test]
    fn folds_partition_the_dataset_exactly_once() {
        let m = fixture(23, 9);
        let assignment = stratified_folds(&m.labels, 5, 3).unwrap();
        let mut all: Vec<usize> = assignment.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
    }

    #[test]
    fn fold_class_counts_differ_by_at_most_one() {
        let m = fixture(31, 11);
        let assignment = stratified_folds(&m.labels, 4, 9).unwrap();
        let pos_counts: Vec<usize> = assignment
            .iter()
            .map(|f| f.iter().filter(|&&i| m.labels[i]).count())
            .collect();
        let neg_counts: Vec<usize> = assignment
            .iter()
            .map(|f| f.iter().filter(|&&i| !m.labels[i]).count())
            .collect();
        for counts in [&pos_counts, &neg_counts] {
            let min = counts.iter().min().unwrap();
            let max = counts.iter().max().unwrap();
            assert!(max - min <= 1, "counts {counts:?}");
        }
    }

    #[test]
    fn leave_one_out_runs_on_a_tiny_fixture() {
        let m = fixture(6, 3);
        let cfg = TrainConfig {
            knn: crate::learners::KnnParams { k: 1 },
            ..TrainConfig::default()
        };
        let result = cross_validate(&m, ModelFamily::Knn, &cfg, 5, 6, 0).unwrap();
        assert_eq!(result.folds.len(), 6);
        // every fold held exactly one row
        let assignment = stratified_folds(&m.labels, 6, 0).unwrap();
        assert!(assignment.iter().all(|f| f.len() == 1));
    }

    #[test]
    fn constant_model_scores_majority_prevalence_per_fold() {
        // positives are the majority (6 of 9); boosting with zero rounds
        // predicts the balanced base rate 0.5, thresholded to positive.
        let m = fixture(9, 6);
        let cfg = TrainConfig {
            boost: BoostParams {
                rounds: 0,
                ..BoostParams::default()
            },
            ..TrainConfig::default()
        };
        let result = cross_validate(&m, ModelFamily::Gb, &cfg, 5, 3, 1).unwrap();
        for fm in &result.folds {
            assert!((fm.accuracy - 2.0 / 3.0).abs() < 1e-12, "fold {fm:?}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let m = fixture(24, 10);
        let cfg = TrainConfig {
            knn: crate::learners::KnnParams { k: 3 },
            ..TrainConfig::default()
        };
        let a = cross_validate(&m, ModelFamily::Knn, &cfg, 5, 4, 7).unwrap();
        let b = cross_validate(&m, ModelFamily::Knn, &cfg, 5, 4, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parameter_errors() {
        let m = fixture(10, 4);
        let cfg = TrainConfig::default();
        assert!(cross_validate(&m, ModelFamily::Knn, &cfg, 5, 1, 0).is_err());
        assert!(cross_validate(&m, ModelFamily::Knn, &cfg, 5, 11, 0).is_err());
        let single = fixture(10, 10);
        assert!(stratified_folds(&single.labels, 5, 0).is_err());
    }
}
