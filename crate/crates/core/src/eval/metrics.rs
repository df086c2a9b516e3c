//! Confusion counts and the threshold metrics derived from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Undefined ratios (zero denominator) are reported as 0.0 with the
/// matching `*_defined` flag cleared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
    pub f1_defined: bool,
}

/// Counts and metrics for one class taken as positive.
pub fn confusion_and_metrics(
    labels: &[bool],
    predictions: &[bool],
    positive_label: bool,
) -> Result<(ConfusionCounts, Metrics)> {
    if labels.len() != predictions.len() {
        return Err(Error::Input(format!(
            "metrics: {} labels vs {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Input("metrics: empty input".into()));
    }
    let mut c = ConfusionCounts::default();
    for (&l, &p) in labels.iter().zip(predictions.iter()) {
        let actual_pos = l == positive_label;
        let predicted_pos = p == positive_label;
        match (actual_pos, predicted_pos) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    let n = c.total() as f64;
    let accuracy = (c.tp + c.tn) as f64 / n;
    let precision_defined = c.tp + c.fp > 0;
    let recall_defined = c.tp + c.fn_ > 0;
    let precision = if precision_defined {
        c.tp as f64 / (c.tp + c.fp) as f64
    } else {
        0.0
    };
    let recall = if recall_defined {
        c.tp as f64 / (c.tp + c.fn_) as f64
    } else {
        0.0
    };
    let f1_defined = precision_defined && recall_defined && precision + recall > 0.0;
    let f1 = if f1_defined {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok((
        c,
        Metrics {
            accuracy,
            precision,
            recall,
            f1,
            precision_defined,
            recall_defined,
            f1_defined,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_score_one_everywhere() {
        let labels = vec![true, false, true, false];
        let (c, m) = confusion_and_metrics(&labels, &labels, true).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (2, 0, 2, 0));
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.f1, 1.0);
    }

    #[test]
    fn all_negative_predictions_flag_precision() {
        let labels = vec![true, true, false];
        let preds = vec![false, false, false];
        let (_, m) = confusion_and_metrics(&labels, &preds, true).unwrap();
        assert_eq!(m.recall, 0.0);
        assert!(m.recall_defined);
        assert!(!m.precision_defined);
        assert_eq!(m.precision, 0.0);
        assert!(!m.f1_defined);
    }

    #[test]
    fn counts_always_cover_every_row() {
        let labels = vec![true, false, false, true, true];
        let preds = vec![false, false, true, true, false];
        let (c, _) = confusion_and_metrics(&labels, &preds, true).unwrap();
        assert_eq!(c.total(), 5);
        // swapping the positive class transposes the confusion matrix
        let (c2, _) = confusion_and_metrics(&labels, &preds, false).unwrap();
        assert_eq!((c2.tp, c2.fp, c2.tn, c2.fn_), (c.tn, c.fn_, c.tp, c.fp));
    }

    #[test]
    fn f1_matches_reported_precision_recall_pair() {
        // tp/(tp+fp) = 0.93 and tp/(tp+fn) = 0.91 exactly:
        // tp = 93*91 = 8463, fp = 7*91 = 637, fn = 9*93 = 837
        let mut labels = Vec::new();
        let mut preds = Vec::new();
        for _ in 0..8463 {
            labels.push(true);
            preds.push(true);
        }
        for _ in 0..637 {
            labels.push(false);
            preds.push(true);
        }
        for _ in 0..837 {
            labels.push(true);
            preds.push(false);
        }
        for _ in 0..63 {
            labels.push(false);
            preds.push(false);
        }
        let (_, m) = confusion_and_metrics(&labels, &preds, true).unwrap();
        assert!((m.precision - 0.93).abs() < 1e-12);
        assert!((m.recall - 0.91).abs() < 1e-12);
        assert!((m.f1 - 0.92).abs() <= 0.005, "f1 = {}", m.f1);
    }

    #[test]
    fn length_mismatch_is_an_input_error() {
        assert!(confusion_and_metrics(&[true], &[true, false], true).is_err());
    }
}
