//! K-nearest-neighbors with stored training data. Scores are the
//! fraction of positive labels among the k nearest rows (Euclidean;
//! distance ties broken by lower row index).

use serde::{Deserialize, Serialize};

use crate::data::{squared_distance, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub x: Matrix,
    pub y: Vec<bool>,
    pub k: usize,
}

pub fn train_knn(x: &Matrix, y: &[bool], params: &KnnParams) -> Result<KnnModel> {
    if params.k == 0 {
        return Err(Error::Param("train_knn: k must be >= 1".into()));
    }
    if params.k > x.n_rows() {
        return Err(Error::Param(format!(
            "train_knn: k={} exceeds {} training rows",
            params.k,
            x.n_rows()
        )));
    }
    if y.len() != x.n_rows() {
        return Err(Error::Param("train_knn: label length mismatch".into()));
    }
    Ok(KnnModel {
        x: x.clone(),
        y: y.to_vec(),
        k: params.k,
    })
}

impl KnnModel {
    pub fn predict_scores(&self, queries: &Matrix) -> Vec<f64> {
        (0..queries.n_rows())
            .map(|q| {
                let row = queries.row(q);
                let mut dists: Vec<(f64, usize)> = (0..self.x.n_rows())
                    .map(|i| (squared_distance(row, self.x.row(i)), i))
                    .collect();
                dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                let positives = dists[..self.k].iter().filter(|&&(_, i)| self.y[i]).count();
                positives as f64 / self.k as f64
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Matrix, Vec<bool>) {
        let x = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![5.0, 5.0],
            vec![6.0, 5.0],
            vec![5.0, 6.0],
        ])
        .unwrap();
        let y = vec![false, false, false, true, true, true];
        (x, y)
    }

    #[test]
    fn k_one_returns_own_label_on_training_rows() {
        let (x, y) = toy();
        let model = train_knn(&x, &y, &KnnParams { k: 1 }).unwrap();
        let scores = model.predict_scores(&x);
        for (s, &label) in scores.iter().zip(y.iter()) {
            assert_eq!(*s, if label { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn k_equal_n_scores_global_positive_rate() {
        let (x, y) = toy();
        let model = train_knn(&x, &y, &KnnParams { k: 6 }).unwrap();
        for s in model.predict_scores(&x) {
            assert_eq!(s, 0.5);
        }
    }

    #[test]
    fn equidistant_tie_with_k_two_scores_half() {
        let x = Matrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        let y = vec![true, false];
        let model = train_knn(&x, &y, &KnnParams { k: 2 }).unwrap();
        let q = Matrix::from_rows(&[vec![0.0]]).unwrap();
        assert_eq!(model.predict_scores(&q), vec![0.5]);
    }

    #[test]
    fn distance_tie_prefers_lower_row_index() {
        // rows 0 and 1 equidistant from the query; k=1 must pick row 0
        let x = Matrix::from_rows(&[vec![1.0], vec![-1.0], vec![9.0]]).unwrap();
        let y = vec![true, false, false];
        let model = train_knn(&x, &y, &KnnParams { k: 1 }).unwrap();
        let q = Matrix::from_rows(&[vec![0.0]]).unwrap();
        assert_eq!(model.predict_scores(&q), vec![1.0]);
    }

    #[test]
    fn k_larger_than_n_is_a_parameter_error() {
        let (x, y) = toy();
        assert!(matches!(
            train_knn(&x, &y, &KnnParams { k: 7 }),
            Err(Error::Param(_))
        ));
    }
}
