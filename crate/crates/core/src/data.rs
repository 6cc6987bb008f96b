//! Labeled observations: vector or tensor predictors (flattened to `vec(X_i)` rows),
//! optional low-dimensional covariates and class labels.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, SpardaError};
use crate::tensor::DenseTensor;

/// External class codes in first-appearance order; position `k` is internal class `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLabels {
    codes: Vec<i64>,
}

impl ClassLabels {
    pub fn from_first_appearance(labels: &[i64]) -> Self {
        let mut codes = Vec::new();
        for &l in labels {
            if !codes.contains(&l) {
                codes.push(l);
            }
        }
        Self { codes }
    }

    pub fn from_codes(codes: Vec<i64>) -> Self {
        Self { codes }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[i64] {
        &self.codes
    }

    pub fn code(&self, k: usize) -> i64 {
        self.codes[k]
    }

    pub fn index_of(&self, code: i64) -> Option<usize> {
        self.codes.iter().position(|&c| c == code)
    }

    pub fn encode(&self, labels: &[i64]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|&l| {
                self.index_of(l).ok_or_else(|| {
                    SpardaError::InvalidArgument(format!("label {l} was not seen during training"))
                })
            })
            .collect()
    }

    pub fn decode(&self, internal: &[usize]) -> Vec<i64> {
        internal.iter().map(|&k| self.codes[k]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    x: Array2<f64>,
    dims: Vec<usize>,
    covariates: Option<Array2<f64>>,
    labels: Vec<usize>,
    classes: ClassLabels,
}

impl LabeledDataset {
    /// Builds a dataset from an `n × ∏dims` matrix whose rows are `vec(X_i)`.
    pub fn new(x: Array2<f64>, dims: Vec<usize>, labels: &[i64]) -> Result<Self> {
        let classes = ClassLabels::from_first_appearance(labels);
        Self::with_classes(x, dims, labels, classes)
    }

    /// Like [`LabeledDataset::new`] but with a fixed class coding, e.g. from a training set.
    pub fn with_classes(
        x: Array2<f64>,
        dims: Vec<usize>,
        labels: &[i64],
        classes: ClassLabels,
    ) -> Result<Self> {
        let d: usize = dims.iter().product();
        if dims.is_empty() || d == 0 {
            return dim_err(format!("invalid predictor dims {dims:?}"));
        }
        if x.ncols() != d {
            return dim_err(format!(
                "predictor rows have {} entries but dims {dims:?} need {d}",
                x.ncols()
            ));
        }
        if x.nrows() != labels.len() {
            return dim_err(format!("{} rows but {} labels", x.nrows(), labels.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SpardaError::InvalidArgument("predictors must be finite".into()));
        }
        let labels = classes.encode(labels)?;
        Ok(Self {
            x,
            dims,
            covariates: None,
            labels,
            classes,
        })
    }

    pub fn vector(x: Array2<f64>, labels: &[i64]) -> Result<Self> {
        let p = x.ncols();
        Self::new(x, vec![p], labels)
    }

    pub fn tensor(xs: &[DenseTensor], labels: &[i64]) -> Result<Self> {
        let dims = match xs.first() {
            Some(t) => t.dims().to_vec(),
            None => return dim_err("no tensors supplied"),
        };
        let d = xs[0].len();
        let mut x = Array2::zeros((xs.len(), d));
        for (i, t) in xs.iter().enumerate() {
            if t.dims() != dims.as_slice() {
                return dim_err(format!(
                    "tensor {i} has dims {:?}, expected {dims:?}",
                    t.dims()
                ));
            }
            x.row_mut(i)
                .iter_mut()
                .zip(t.as_slice())
                .for_each(|(o, &v)| *o = v);
        }
        Self::new(x, dims, labels)
    }

    pub fn with_covariates(mut self, u: Array2<f64>) -> Result<Self> {
        if u.nrows() != self.n() {
            return dim_err(format!(
                "{} covariate rows for {} observations",
                u.nrows(),
                self.n()
            ));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(SpardaError::InvalidArgument("covariates must be finite".into()));
        }
        self.covariates = Some(u);
        Ok(self)
    }

    pub fn without_covariates(mut self) -> Self {
        self.covariates = None;
        self
    }

    /// Replaces the predictor matrix, keeping labels and covariates.
    pub fn with_predictors(&self, x: Array2<f64>) -> Result<Self> {
        if x.dim() != self.x.dim() {
            return dim_err(format!(
                "replacement predictors {:?} differ from {:?}",
                x.dim(),
                self.x.dim()
            ));
        }
        Ok(Self {
            x,
            dims: self.dims.clone(),
            covariates: self.covariates.clone(),
            labels: self.labels.clone(),
            classes: self.classes.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Number of predictor entries, `∏ dims`.
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn covariates(&self) -> Option<ArrayView2<'_, f64>> {
        self.covariates.as_ref().map(|u| u.view())
    }

    /// Internal labels in `0..K`.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn original_labels(&self) -> Vec<i64> {
        self.classes.decode(&self.labels)
    }

    pub fn classes(&self) -> &ClassLabels {
        &self.classes
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows in the given order; the class coding of `self` is kept.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), rows),
            dims: self.dims.clone(),
            covariates: self.covariates.as_ref().map(|u| u.select(Axis(0), rows)),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes.clone(),
        }
    }

    pub fn tensor_at(&self, i: usize) -> DenseTensor {
        DenseTensor::new(self.dims.clone(), self.x.row(i).to_vec())
            .expect("row length matches dims")
    }

    pub(crate) fn require_classes(&self, k: usize, method: &str) -> Result<()> {
        if self.n_classes() != k {
            return Err(SpardaError::InvalidArgument(format!(
                "{method} needs exactly {k} classes, got {}",
                self.n_classes()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn labels_follow_first_appearance() {
        let ds = LabeledDataset::vector(array![[0.0], [1.0], [2.0], [3.0]], &[7, 3, 7, 5]).unwrap();
        assert_eq!(ds.classes().codes(), &[7, 3, 5]);
        assert_eq!(ds.labels(), &[0, 1, 0, 2]);
        assert_eq!(ds.original_labels(), vec![7, 3, 7, 5]);
        assert_eq!(ds.class_counts(), vec![2, 1, 1]);
    }

    #[test]
    fn rejects_row_length_mismatch() {
        let x = Array2::zeros((2, 6));
        assert!(LabeledDataset::new(x, vec![2, 2], &[1, 2]).is_err());
    }

    #[test]
    fn unseen_label_rejected() {
        let classes = ClassLabels::from_codes(vec![1, 2]);
        let err = LabeledDataset::with_classes(array![[0.0]], vec![1], &[3], classes);
        assert!(err.is_err());
    }

    #[test]
    fn subset_keeps_coding() {
        let ds = LabeledDataset::vector(array![[0.0], [1.0], [2.0]], &[1, 2, 1]).unwrap();
        let sub = ds.subset(&[2, 0]);
        assert_eq!(sub.n_classes(), 2);
        assert_eq!(sub.class_counts(), vec![2, 0]);
    }
}
