//! AUROC as the Mann-Whitney statistic, computed from average ranks in
//! O(n log n), with step points for the ROC curve.

use crate::error::{Error, Result};

fn check_classes(labels: &[bool]) -> Result<(usize, usize)> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Eval(
            "auroc: both classes must be present".into(),
        ));
    }
    Ok((n_pos, n_neg))
}

/// Probability that a random positive outranks a random negative, ties
/// counting half: (concordant + 0.5 * tied) / (n_pos * n_neg).
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Input("auroc: length mismatch".into()));
    }
    let (n_pos, n_neg) = check_classes(labels)?;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // average ranks within tied groups, 1-based
    let n = scores.len();
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            if labels[k] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }

    let u = rank_sum_pos - (n_pos as f64) * (n_pos as f64 + 1.0) / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// ROC step points from (0,0) to (1,1), sweeping thresholds from high to
/// low score; one point per distinct score.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    if scores.len() != labels.len() {
        return Err(Error::Input("roc: length mismatch".into()));
    }
    let (n_pos, n_neg) = check_classes(labels)?;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    /// O(n^2) pair-counting oracle.
    pub fn auroc_brute_force(scores: &[f64], labels: &[bool]) -> f64 {
        let mut concordant = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    concordant += 1.0;
                } else if scores[i] == scores[j] {
                    concordant += 0.5;
                }
            }
        }
        concordant / pairs
    }

    #[test]
    fn perfectly_separated_scores_give_one() {
        let scores = vec![0.9, 0.8, 0.2, 0.1];
        let labels = vec![true, true, false, false];
        assert_eq!(auroc(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn identical_scores_give_half() {
        let scores = vec![0.5; 6];
        let labels = vec![true, false, true, false, true, false];
        assert_eq!(auroc(&scores, &labels).unwrap(), 0.5);
    }

    #[test]
    fn rank_method_matches_brute_force_with_ties() {
        let mut r = rng::stream(2024, 50, 0);
        for case in 0..50 {
            let n = 2 + r.random_range(0..38);
            // quantized scores force plenty of ties
            let scores: Vec<f64> = (0..n).map(|_| (r.random_range(0..8) as f64) / 4.0).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| r.random::<bool>()).collect();
            labels[0] = true;
            labels[1] = false;
            let fast = auroc(&scores, &labels).unwrap();
            let slow = auroc_brute_force(&scores, &labels);
            assert!(
                (fast - slow).abs() <= 1e-12,
                "case {case}: rank {fast} vs brute {slow}"
            );
        }
    }

    #[test]
    fn one_class_input_is_an_evaluation_error() {
        assert!(matches!(
            auroc(&[0.1, 0.2], &[true, true]),
            Err(Error::Eval(_))
        ));
    }

    #[test]
    fn invariant_under_strictly_increasing_transforms() {
        let mut r = rng::stream(7, 51, 0);
        let n = 60;
        let scores: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| r.random::<bool>()).collect();
        labels[0] = true;
        labels[1] = false;
        let base = auroc(&scores, &labels).unwrap();
        let transformed: Vec<f64> = scores.iter().map(|&s| (3.0 * s + 1.0).exp()).collect();
        assert!((auroc(&transformed, &labels).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn label_flip_with_negated_scores_is_symmetric() {
        let mut r = rng::stream(8, 52, 0);
        let n = 40;
        let scores: Vec<f64> = (0..n).map(|_| (r.random_range(0..10) as f64) / 5.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| r.random::<bool>()).collect();
        labels[0] = true;
        labels[1] = false;
        let a = auroc(&scores, &labels).unwrap();
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let b = auroc(&negated, &flipped).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn roc_points_span_the_unit_square() {
        let scores = vec![0.9, 0.7, 0.7, 0.3, 0.1];
        let labels = vec![true, true, false, false, true];
        let pts = roc_points(&scores, &labels).unwrap();
        assert_eq!(pts.first(), Some(&(0.0, 0.0)));
        assert_eq!(pts.last(), Some(&(1.0, 1.0)));
        // monotone in both coordinates
        for w in pts.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        // 4 distinct scores -> 4 interior steps + origin
        assert_eq!(pts.len(), 5);
    }
}
