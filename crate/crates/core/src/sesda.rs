//! Semiparametric two-class discriminant analysis.
//!
//! Each predictor is mapped through an estimated monotone transform
//! `ĥ_j = Φ⁻¹ ∘ F̂_j` built from Winsorized empirical CDFs, after which the direct
//! sparse discriminant path is fitted on the transformed data.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::binary::{dsda_fit, BinaryPath};
use crate::data::LabeledDataset;
use crate::error::{dim_err, Result, SpardaError};
use crate::path::PathOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TransformVariant {
    Naive,
    #[default]
    Pooled,
}

/// Right-continuous empirical CDF of `sorted` at `x`, clamped to `[1/m², 1 − 1/m²]`.
pub fn winsorized_ecdf(sorted: &[f64], x: f64) -> f64 {
    let m = sorted.len() as f64;
    let count = sorted.partition_point(|&v| v <= x) as f64;
    let lo = 1.0 / (m * m);
    (count / m).clamp(lo, 1.0 - lo)
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid parameters")
}

/// Per-variable monotone transforms fitted on two-class training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneTransform {
    pub variant: TransformVariant,
    /// Internal label of the class used as the reference ("first") class: the larger one.
    pub reference_class: usize,
    /// Sorted reference-class training values per variable.
    pub reference_knots: Vec<Vec<f64>>,
    /// Sorted other-class training values per variable.
    pub other_knots: Vec<Vec<f64>>,
    /// Pooled shift of the other class per variable.
    pub shifts: Vec<f64>,
    /// Mixing weights of the reference-class and other-class transforms.
    pub weights: (f64, f64),
}

impl MonotoneTransform {
    pub fn fit(data: &LabeledDataset, variant: TransformVariant) -> Result<Self> {
        data.require_classes(2, "semiparametric discriminant analysis")?;
        let counts = data.class_counts();
        if counts.iter().any(|&c| c < 2) {
            return Err(SpardaError::Estimation(
                "each class needs at least two observations for the transform".into(),
            ));
        }
        // ties keep the first class as reference
        let reference_class = usize::from(counts[1] > counts[0]);
        let n = data.n() as f64;
        let weights = (
            counts[reference_class] as f64 / n,
            counts[1 - reference_class] as f64 / n,
        );
        let labels = data.labels();
        let x = data.x();
        let per_var: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..data.dim())
            .into_par_iter()
            .map(|j| {
                let col = x.column(j);
                let mut reference: Vec<f64> = Vec::with_capacity(counts[reference_class]);
                let mut other: Vec<f64> = Vec::with_capacity(counts[1 - reference_class]);
                for (&v, &l) in col.iter().zip(labels) {
                    if l == reference_class {
                        reference.push(v);
                    } else {
                        other.push(v);
                    }
                }
                reference.sort_by(f64::total_cmp);
                other.sort_by(f64::total_cmp);
                let shift = match variant {
                    TransformVariant::Naive => 0.0,
                    TransformVariant::Pooled => {
                        let phi = standard_normal();
                        let from_reference = mean_of(other.iter().map(|&v| phi.inverse_cdf(winsorized_ecdf(&reference, v))));
                        let from_other = -mean_of(reference.iter().map(|&v| phi.inverse_cdf(winsorized_ecdf(&other, v))));
                        weights.0 * from_reference + weights.1 * from_other
                    }
                };
                (reference, other, shift)
            })
            .collect();
        let mut reference_knots = Vec::with_capacity(per_var.len());
        let mut other_knots = Vec::with_capacity(per_var.len());
        let mut shifts = Vec::with_capacity(per_var.len());
        for (r, o, s) in per_var {
            reference_knots.push(r);
            other_knots.push(o);
            shifts.push(s);
        }
        Ok(Self {
            variant,
            reference_class,
            reference_knots,
            other_knots,
            shifts,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.reference_knots.len()
    }

    /// `ĥ_j(x)`.
    pub fn apply_one(&self, j: usize, x: f64) -> f64 {
        let phi = standard_normal();
        let h1 = phi.inverse_cdf(winsorized_ecdf(&self.reference_knots[j], x));
        match self.variant {
            TransformVariant::Naive => h1,
            TransformVariant::Pooled => {
                let h2 = phi.inverse_cdf(winsorized_ecdf(&self.other_knots[j], x)) + self.shifts[j];
                self.weights.0 * h1 + self.weights.1 * h2
            }
        }
    }

    pub fn apply_row(&self, x: ArrayView1<f64>) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return dim_err(format!("transform expects {} variables, got {}", self.dim(), x.len()));
        }
        Ok(x.iter().enumerate().map(|(j, &v)| self.apply_one(j, v)).collect())
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return dim_err(format!("transform expects {} variables, got {}", self.dim(), x.ncols()));
        }
        let cols: Vec<Vec<f64>> = (0..self.dim())
            .into_par_iter()
            .map(|j| x.column(j).iter().map(|&v| self.apply_one(j, v)).collect())
            .collect();
        let mut out = Array2::zeros(x.dim());
        for (mut col, vals) in out.axis_iter_mut(Axis(1)).zip(cols) {
            col.iter_mut().zip(vals).for_each(|(o, v)| *o = v);
        }
        Ok(out)
    }
}

fn mean_of(it: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = it.len() as f64;
    it.sum::<f64>() / n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SesdaFit {
    pub transform: MonotoneTransform,
    pub path: BinaryPath,
}

/// Fits the transform on the training predictors, then the direct path on transformed data.
pub fn sesda_fit(
    data: &LabeledDataset,
    lambdas: Option<&[f64]>,
    variant: TransformVariant,
    opts: &PathOptions,
) -> Result<SesdaFit> {
    let transform = MonotoneTransform::fit(data, variant)?;
    let transformed = data.with_predictors(transform.apply(data.x())?)?;
    let path = dsda_fit(&transformed, lambdas, opts)?;
    Ok(SesdaFit { transform, path })
}
