//! SMOTE oversampling in the scaled feature space: synthetic minority
//! points on the segment between a minority row and one of its k nearest
//! minority neighbors.

use rand::Rng;

use crate::data::{squared_distance, Matrix};
use crate::error::{Error, Result};
use crate::rng::{self, TAG_SMOTE};

/// Balances the classes by appending synthetic minority rows. Each
/// synthetic row is `x + u * (z - x)` with `u` uniform on [0,1), `x` a
/// minority row (cycled in order) and `z` one of its k nearest minority
/// neighbors (Euclidean, distance ties broken by lower row index).
/// Original rows are left untouched; synthetic rows follow them.
pub fn smote_balance(
    x: &Matrix,
    y: &[bool],
    k: usize,
    seed: u64,
) -> Result<(Matrix, Vec<bool>)> {
    if k == 0 {
        return Err(Error::Param("smote: k must be >= 1".into()));
    }
    if x.n_rows() != y.len() {
        return Err(Error::Param("smote: label length mismatch".into()));
    }
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i]).collect();
    let neg: Vec<usize> = (0..y.len()).filter(|&i| !y[i]).collect();
    let (minority, majority) = if pos.len() <= neg.len() {
        (pos, neg)
    } else {
        (neg, pos)
    };
    let minority_label = minority.first().map(|&i| y[i]).unwrap_or(true);
    if minority.len() == majority.len() {
        return Ok((x.clone(), y.to_vec()));
    }
    if minority.len() < 2 {
        return Err(Error::Rebalance(format!(
            "smote: minority class has {} member(s), need >= 2",
            minority.len()
        )));
    }

    let k_eff = k.min(minority.len() - 1);
    // k nearest minority neighbors per minority row (brute force)
    let neighbors: Vec<Vec<usize>> = minority
        .iter()
        .map(|&i| {
            let mut dists: Vec<(f64, usize)> = minority
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (squared_distance(x.row(i), x.row(j)), j))
                .collect();
            dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            dists.truncate(k_eff);
            dists.into_iter().map(|(_, j)| j).collect()
        })
        .collect();

    let needed = majority.len() - minority.len();
    let mut rng = rng::stream(seed, TAG_SMOTE, 0);
    let mut out = x.clone();
    let mut labels = y.to_vec();
    for s in 0..needed {
        let mi = s % minority.len();
        let base = x.row(minority[mi]);
        let pick = rng.random_range(0..neighbors[mi].len());
        let neighbor = x.row(neighbors[mi][pick]);
        let u: f64 = rng.random::<f64>();
        let synthetic: Vec<f64> = base
            .iter()
            .zip(neighbor.iter())
            .map(|(&a, &b)| a + u * (b - a))
            .collect();
        out.push_row(&synthetic);
        labels.push(minority_label);
    }
    Ok((out, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_minority_synthesizes_on_the_segment() {
        // minority (positive): (0,0) and (1,1); everything synthetic must be (t,t)
        let x = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![5.0, 0.0],
            vec![6.0, 0.0],
            vec![7.0, 0.0],
            vec![8.0, 0.0],
        ])
        .unwrap();
        let y = vec![true, true, false, false, false, false];
        let (bx, by) = smote_balance(&x, &y, 1, 9).unwrap();
        assert_eq!(by.iter().filter(|&&l| l).count(), 4);
        for r in 6..bx.n_rows() {
            let row = bx.row(r);
            assert!((row[0] - row[1]).abs() < 1e-12, "not on diagonal: {row:?}");
            assert!((0.0..1.0).contains(&row[0]), "t outside [0,1): {}", row[0]);
        }
    }

    #[test]
    fn class_counts_equalize() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..300 {
            rows.push(vec![i as f64, (i % 7) as f64]);
            y.push(false);
        }
        for i in 0..100 {
            rows.push(vec![1000.0 + i as f64, (i % 5) as f64]);
            y.push(true);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let (bx, by) = smote_balance(&x, &y, 5, 1).unwrap();
        assert_eq!(by.iter().filter(|&&l| l).count(), 300);
        assert_eq!(by.iter().filter(|&&l| !l).count(), 300);
        assert_eq!(bx.n_rows(), 600);
        // originals untouched, in place
        for r in 0..400 {
            assert_eq!(bx.row(r), x.row(r));
            assert_eq!(by[r], y[r]);
        }
    }

    #[test]
    fn synthetic_rows_respect_coordinatewise_bounds_of_some_minority_pair() {
        let x = Matrix::from_rows(&[
            vec![0.0, 1.0],
            vec![2.0, 3.0],
            vec![1.0, 0.5],
            vec![10.0, 10.0],
            vec![11.0, 11.0],
            vec![12.0, 12.0],
            vec![13.0, 13.0],
            vec![14.0, 14.0],
        ])
        .unwrap();
        let y = vec![true, true, true, false, false, false, false, false];
        let (bx, _) = smote_balance(&x, &y, 2, 33).unwrap();
        let minority: Vec<&[f64]> = vec![x.row(0), x.row(1), x.row(2)];
        for r in 8..bx.n_rows() {
            let s = bx.row(r);
            let ok = minority.iter().enumerate().any(|(a, ra)| {
                minority.iter().enumerate().any(|(b, rb)| {
                    a != b
                        && s.iter().enumerate().all(|(c, &v)| {
                            let lo = ra[c].min(rb[c]) - 1e-12;
                            let hi = ra[c].max(rb[c]) + 1e-12;
                            v >= lo && v <= hi
                        })
                })
            });
            assert!(ok, "synthetic row {s:?} outside all pair boxes");
        }
    }

    #[test]
    fn single_member_minority_is_a_rebalance_error() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let y = vec![true, false, false];
        assert!(matches!(
            smote_balance(&x, &y, 5, 0),
            Err(Error::Rebalance(_))
        ));
    }

    #[test]
    fn already_balanced_input_is_returned_unchanged() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let y = vec![true, true, false, false];
        let (bx, by) = smote_balance(&x, &y, 5, 0).unwrap();
        assert_eq!(bx, x);
        assert_eq!(by, y);
    }

    #[test]
    fn deterministic_given_seed() {
        let x = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 2.0],
            vec![2.0, 1.0],
            vec![9.0, 9.0],
            vec![8.0, 9.0],
            vec![9.0, 8.0],
            vec![8.0, 8.0],
            vec![7.0, 8.0],
        ])
        .unwrap();
        let y = vec![true, true, true, false, false, false, false, false];
        let (a, _) = smote_balance(&x, &y, 2, 77).unwrap();
        let (b, _) = smote_balance(&x, &y, 2, 77).unwrap();
        assert_eq!(a, b);
        let (c, _) = smote_balance(&x, &y, 2, 78).unwrap();
        assert_ne!(a, c);
    }
}
