//! Patient x feature table with an explicit missingness mask, plus the
//! demographic token columns that one-hot encoding later replaces.

use std::io::Write;
use std::path::Path;

use crate::data::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub subject_ids: Vec<i64>,
    pub labels: Vec<bool>,
    /// Numeric column names, unique across numeric + categorical.
    pub columns: Vec<String>,
    values: Vec<f64>,
    /// true = observed; same shape as `values`.
    mask: Vec<bool>,
    /// Categorical (token) column names.
    pub cat_columns: Vec<String>,
    cats: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(columns: Vec<String>, cat_columns: Vec<String>) -> FeatureMatrix {
        FeatureMatrix {
            subject_ids: Vec::new(),
            labels: Vec::new(),
            columns,
            values: Vec::new(),
            mask: Vec::new(),
            cat_columns,
            cats: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn n_cat_cols(&self) -> usize {
        self.cat_columns.len()
    }

    pub fn push_row(
        &mut self,
        subject_id: i64,
        label: bool,
        values: &[Option<f64>],
        cats: &[String],
    ) {
        assert_eq!(values.len(), self.columns.len());
        assert_eq!(cats.len(), self.cat_columns.len());
        self.subject_ids.push(subject_id);
        self.labels.push(label);
        for v in values {
            match v {
                Some(x) => {
                    self.values.push(*x);
                    self.mask.push(true);
                }
                None => {
                    self.values.push(f64::NAN);
                    self.mask.push(false);
                }
            }
        }
        self.cats.extend_from_slice(cats);
    }

    pub fn value(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.columns.len() + c]
    }

    pub fn observed(&self, r: usize, c: usize) -> bool {
        self.mask[r * self.columns.len() + c]
    }

    pub fn set_value(&mut self, r: usize, c: usize, v: f64) {
        let i = r * self.columns.len() + c;
        self.values[i] = v;
        self.mask[i] = true;
    }

    pub fn cat(&self, r: usize, c: usize) -> &str {
        &self.cats[r * self.cat_columns.len() + c]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn missing_fraction(&self, c: usize) -> f64 {
        if self.n_rows() == 0 {
            return 0.0;
        }
        let missing = (0..self.n_rows()).filter(|&r| !self.observed(r, c)).count();
        missing as f64 / self.n_rows() as f64
    }

    /// Keeps the numeric columns at `idx`, in that order.
    pub fn select_columns(&self, idx: &[usize]) -> FeatureMatrix {
        let ncol = self.columns.len();
        let mut out = FeatureMatrix {
            subject_ids: self.subject_ids.clone(),
            labels: self.labels.clone(),
            columns: idx.iter().map(|&c| self.columns[c].clone()).collect(),
            values: Vec::with_capacity(self.n_rows() * idx.len()),
            mask: Vec::with_capacity(self.n_rows() * idx.len()),
            cat_columns: self.cat_columns.clone(),
            cats: self.cats.clone(),
        };
        for r in 0..self.n_rows() {
            for &c in idx {
                out.values.push(self.values[r * ncol + c]);
                out.mask.push(self.mask[r * ncol + c]);
            }
        }
        out
    }

    /// Keeps the rows at `idx`, in that order.
    pub fn take_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let ncol = self.columns.len();
        let ncat = self.cat_columns.len();
        let mut out = FeatureMatrix::new(self.columns.clone(), self.cat_columns.clone());
        for &r in idx {
            out.subject_ids.push(self.subject_ids[r]);
            out.labels.push(self.labels[r]);
            out.values.extend_from_slice(&self.values[r * ncol..(r + 1) * ncol]);
            out.mask.extend_from_slice(&self.mask[r * ncol..(r + 1) * ncol]);
            out.cats.extend_from_slice(&self.cats[r * ncat..(r + 1) * ncat]);
        }
        out
    }

    /// Dense numeric matrix; requires every cell observed.
    pub fn to_dense(&self) -> Result<Matrix> {
        if self.mask.iter().any(|m| !m) {
            return Err(Error::Pipeline(
                "matrix still has missing cells; impute first".into(),
            ));
        }
        Matrix::from_vec(self.values.clone(), self.n_rows(), self.n_cols())
    }

    /// Replaces the numeric block wholesale (used after scaling).
    pub fn replace_values(&mut self, dense: &Matrix) {
        assert_eq!(dense.n_rows(), self.n_rows());
        assert_eq!(dense.n_cols(), self.n_cols());
        self.values.clear();
        for r in 0..dense.n_rows() {
            self.values.extend_from_slice(dense.row(r));
        }
        self.mask = vec![true; self.values.len()];
    }

    /// Appends a fully observed numeric column.
    pub fn push_column(&mut self, name: String, column: &[f64]) {
        assert_eq!(column.len(), self.n_rows());
        let ncol = self.columns.len();
        let mut values = Vec::with_capacity(self.n_rows() * (ncol + 1));
        let mut mask = Vec::with_capacity(self.n_rows() * (ncol + 1));
        for r in 0..self.n_rows() {
            values.extend_from_slice(&self.values[r * ncol..(r + 1) * ncol]);
            mask.extend_from_slice(&self.mask[r * ncol..(r + 1) * ncol]);
            values.push(column[r]);
            mask.push(true);
        }
        self.values = values;
        self.mask = mask;
        self.columns.push(name);
    }

    /// Drops every categorical column (after one-hot encoding).
    pub fn clear_categoricals(&mut self) {
        self.cat_columns.clear();
        self.cats.clear();
    }

    /// Writes `features.csv`: SUBJECT_ID, LABEL, token columns, numeric
    /// columns; masked cells are empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut header = vec!["SUBJECT_ID".to_string(), "LABEL".to_string()];
        header.extend(self.cat_columns.iter().cloned());
        header.extend(self.columns.iter().cloned());
        writeln!(file, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
        for r in 0..self.n_rows() {
            let mut fields = vec![
                self.subject_ids[r].to_string(),
                if self.labels[r] { "1" } else { "0" }.to_string(),
            ];
            for c in 0..self.cat_columns.len() {
                fields.push(csv_escape(self.cat(r, c)));
            }
            for c in 0..self.columns.len() {
                if self.observed(r, c) {
                    fields.push(crate::report::fmt_f64(self.value(r, c)));
                } else {
                    fields.push(String::new());
                }
            }
            writeln!(file, "{}", fields.join(",")).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    /// Reads a `features.csv` produced by [`write_csv`]. Columns named
    /// `gender` or `ethnicity` are treated as categorical; everything
    /// else after SUBJECT_ID/LABEL is numeric.
    pub fn read_csv(path: &Path) -> Result<FeatureMatrix> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let headers = reader
            .headers()
            .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?
            .clone();
        let names: Vec<String> = headers.iter().map(|s| s.to_string()).collect();
        if names.len() < 2 || names[0] != "SUBJECT_ID" || names[1] != "LABEL" {
            return Err(Error::Integrity(format!(
                "{}: expected SUBJECT_ID,LABEL leading columns",
                path.display()
            )));
        }
        let mut cat_idx = Vec::new();
        let mut num_idx = Vec::new();
        for (i, name) in names.iter().enumerate().skip(2) {
            if name == "gender" || name == "ethnicity" {
                cat_idx.push(i);
            } else {
                num_idx.push(i);
            }
        }
        let mut out = FeatureMatrix::new(
            num_idx.iter().map(|&i| names[i].clone()).collect(),
            cat_idx.iter().map(|&i| names[i].clone()).collect(),
        );
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e))
            })?;
            let subject: i64 = rec
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::Integrity(format!("{}: bad SUBJECT_ID", path.display())))?;
            let label = rec.get(1).unwrap_or("") == "1";
            let values: Vec<Option<f64>> = num_idx
                .iter()
                .map(|&i| {
                    let cell = rec.get(i).unwrap_or("").trim();
                    if cell.is_empty() {
                        None
                    } else {
                        cell.parse::<f64>().ok()
                    }
                })
                .collect();
            let cats: Vec<String> = cat_idx
                .iter()
                .map(|&i| rec.get(i).unwrap_or("").to_string())
                .collect();
            out.push_row(subject, label, &values, &cats);
        }
        Ok(out)
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureMatrix {
        let mut m = FeatureMatrix::new(
            vec!["a".into(), "b".into()],
            vec!["gender".into()],
        );
        m.push_row(1, false, &[Some(1.0), None], &["M".into()]);
        m.push_row(2, true, &[Some(2.0), Some(5.0)], &["F".into()]);
        m
    }

    #[test]
    fn mask_tracks_missing_cells() {
        let m = sample();
        assert!(m.observed(0, 0));
        assert!(!m.observed(0, 1));
        assert_eq!(m.missing_fraction(1), 0.5);
    }

    #[test]
    fn csv_round_trip_preserves_mask_and_labels() {
        let m = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        m.write_csv(&path).unwrap();
        let back = FeatureMatrix::read_csv(&path).unwrap();
        assert_eq!(back.subject_ids, m.subject_ids);
        assert_eq!(back.labels, m.labels);
        assert_eq!(back.columns, m.columns);
        assert_eq!(back.cat_columns, m.cat_columns);
        assert!(!back.observed(0, 1));
        assert_eq!(back.value(1, 1), 5.0);
        assert_eq!(back.cat(0, 0), "M");
    }

    #[test]
    fn to_dense_refuses_missing_cells() {
        let m = sample();
        assert!(m.to_dense().is_err());
        let full = m.take_rows(&[1]);
        assert_eq!(full.to_dense().unwrap().row(0), &[2.0, 5.0]);
    }
}
