//! Percentile bootstrap confidence interval for the AUROC.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::auroc::auroc;
use crate::rng::{self, TAG_BOOTSTRAP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub lo: f64,
    pub hi: f64,
    /// AUROC of every retained resample, in resample order.
    pub samples: Vec<f64>,
    /// resamples abandoned after 10 one-class redraws
    pub skipped: usize,
}

/// Empirical percentile interval over B resamples of (score, label)
/// pairs with replacement. A resample that comes out one-class is
/// redrawn up to 10 times, then skipped and counted. Each resample index
/// has its own RNG stream, so the result is independent of evaluation
/// order.
pub fn bootstrap_auroc_ci(
    scores: &[f64],
    labels: &[bool],
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<BootstrapCi> {
    if b == 0 {
        return Err(Error::Param("bootstrap: B must be positive".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Param(format!("bootstrap: alpha must be in (0,1), got {alpha}")));
    }
    if scores.len() != labels.len() {
        return Err(Error::Input("bootstrap: length mismatch".into()));
    }
    let n = scores.len();
    auroc(scores, labels)?; // validates both classes present

    let mut samples = Vec::with_capacity(b);
    let mut skipped = 0usize;
    for i in 0..b {
        let mut stream = rng::stream(seed, TAG_BOOTSTRAP, i as u64);
        let mut found = None;
        for _attempt in 0..10 {
            let mut s = Vec::with_capacity(n);
            let mut l = Vec::with_capacity(n);
            for _ in 0..n {
                let j = stream.random_range(0..n);
                s.push(scores[j]);
                l.push(labels[j]);
            }
            if l.iter().any(|&x| x) && l.iter().any(|&x| !x) {
                found = Some(auroc(&s, &l)?);
                break;
            }
        }
        match found {
            Some(a) => samples.push(a),
            None => skipped += 1,
        }
    }
    if samples.is_empty() {
        return Err(Error::Eval("bootstrap: every resample was one-class".into()));
    }

    let mut sorted = samples.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = percentile(&sorted, alpha / 2.0);
    let hi = percentile(&sorted, 1.0 - alpha / 2.0);
    Ok(BootstrapCi {
        lo,
        hi,
        samples,
        skipped,
    })
}

/// Linear-interpolation percentile on a sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let h = (m - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(m - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfectly_separated_scores_give_degenerate_interval() {
        let scores = vec![0.9, 0.8, 0.7, 0.3, 0.2, 0.1];
        let labels = vec![true, true, true, false, false, false];
        let ci = bootstrap_auroc_ci(&scores, &labels, 200, 0.05, 3).unwrap();
        assert_eq!(ci.lo, 1.0);
        assert_eq!(ci.hi, 1.0);
        assert!(ci.samples.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let scores: Vec<f64> = (0..30).map(|i| (i as f64 * 0.618) % 1.0).collect();
        let labels: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
        let a = bootstrap_auroc_ci(&scores, &labels, 100, 0.05, 11).unwrap();
        let b = bootstrap_auroc_ci(&scores, &labels, 100, 0.05, 11).unwrap();
        assert_eq!(a, b);
        let c = bootstrap_auroc_ci(&scores, &labels, 100, 0.05, 12).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn interval_endpoints_are_order_statistics_of_samples() {
        let scores: Vec<f64> = (0..40).map(|i| ((i * 7) % 13) as f64).collect();
        let labels: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let ci = bootstrap_auroc_ci(&scores, &labels, 500, 0.05, 5).unwrap();
        let min = ci.samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = ci.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(ci.lo >= min && ci.lo <= max);
        assert!(ci.hi >= ci.lo && ci.hi <= max);
        assert!(ci.samples.iter().all(|&a| (0.0..=1.0).contains(&a)));
    }

    #[test]
    fn invalid_parameters_rejected() {
        let scores = vec![0.1, 0.9];
        let labels = vec![false, true];
        assert!(bootstrap_auroc_ci(&scores, &labels, 0, 0.05, 0).is_err());
        assert!(bootstrap_auroc_ci(&scores, &labels, 10, 0.0, 0).is_err());
        assert!(bootstrap_auroc_ci(&scores, &[true, true], 10, 0.05, 0).is_err());
    }

    #[test]
    fn percentile_interpolates_linearly() {
        let sorted = vec![0.0, 1.0, 2.0, 3.0];
        assert_eq!(percentile(&sorted, 0.5), 1.5);
        assert_eq!(percentile(&sorted, 0.0), 0.0);
        assert_eq!(percentile(&sorted, 1.0), 3.0);
        assert!((percentile(&sorted, 0.025) - 0.075).abs() < 1e-12);
    }
}
