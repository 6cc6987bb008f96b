//! Removal of the within-class linear effect of low-dimensional covariates.
//!
//! The model is `X | U, Y = k ~ N(μ_k + αU, Σ)` and `U | Y = k ~ N(φ_k, Ψ)`. The
//! regression `α̂ = (ŨᵀŨ)⁻¹ŨᵀX̃` on class-centered data shares one `q × q` Gram matrix
//! across every predictor entry, so it is factored once.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{dim_err, Result, SpardaError};
use crate::lda::{class_centered, CovariateTerms, DiscriminantRule};
use crate::linalg::SpdSolver;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjustment {
    /// `d × q`; row `j` holds the regression of predictor entry `j` on the covariates.
    pub alpha: Array2<f64>,
    /// `K × q` class means of the covariates.
    pub phi: Array2<f64>,
    /// Pooled covariate covariance (denominator `n − K`).
    pub psi: Array2<f64>,
    /// `K × q`, `γ_k = Ψ̂⁻¹(φ_k − φ_1)`; row 0 is zero.
    pub gamma: Array2<f64>,
}

impl Adjustment {
    /// Fits the adjustment from a dataset that carries covariates.
    pub fn fit(data: &LabeledDataset) -> Result<Self> {
        let u = data
            .covariates()
            .ok_or_else(|| SpardaError::InvalidArgument("dataset has no covariates".into()))?;
        let (n, q) = u.dim();
        let k = data.n_classes();
        if q == 0 {
            return dim_err("covariate matrix has no columns");
        }
        if n <= k {
            return Err(SpardaError::Estimation(format!(
                "covariate adjustment needs n > K (n = {n}, K = {k})"
            )));
        }
        let counts = data.class_counts();
        if counts.contains(&0) {
            return Err(SpardaError::Estimation("a class has no observations".into()));
        }
        let labels = data.labels();
        let phi = class_means(u, labels, &counts);
        let x_means = class_means(data.x(), labels, &counts);
        let uc = class_centered(u, labels, &phi);
        let xc = class_centered(data.x(), labels, &x_means);
        let gram = uc.t().dot(&uc);
        let solver = SpdSolver::new(gram.view()).ok_or(SpardaError::SingularCovariates)?;
        let alpha = solver.solve_mat(uc.t().dot(&xc).view()).reversed_axes();
        let psi = gram / (n - k) as f64;
        let psi_solver = SpdSolver::new(psi.view()).ok_or(SpardaError::SingularCovariates)?;
        let mut gamma = Array2::zeros((k, q));
        for c in 1..k {
            let diff = &phi.row(c) - &phi.row(0);
            gamma.row_mut(c).assign(&psi_solver.solve_vec(diff.view()));
        }
        Ok(Self {
            alpha,
            phi,
            psi,
            gamma,
        })
    }

    pub fn n_covariates(&self) -> usize {
        self.alpha.ncols()
    }

    /// `x_i − α̂ u_i` for every row.
    pub fn apply(&self, x: ArrayView2<f64>, u: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.alpha.nrows() || u.ncols() != self.alpha.ncols() || x.nrows() != u.nrows() {
            return dim_err(format!(
                "adjustment expects {} predictors and {} covariates, got {:?} and {:?}",
                self.alpha.nrows(),
                self.alpha.ncols(),
                x.dim(),
                u.dim()
            ));
        }
        Ok(&x - &u.dot(&self.alpha.t()))
    }

    /// Predictors of `data` adjusted by its own covariates; the result carries no covariates.
    pub fn adjust_dataset(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        let u = data
            .covariates()
            .ok_or_else(|| SpardaError::InvalidArgument("dataset has no covariates".into()))?;
        let adjusted = self.apply(data.x(), u)?;
        Ok(data.with_predictors(adjusted)?.without_covariates())
    }

    /// Adds the covariate score `γ_kᵀu − ½γ_kᵀ(φ_k + φ_1)` to a rule fitted on adjusted data.
    pub fn attach(&self, mut rule: DiscriminantRule) -> DiscriminantRule {
        for c in 1..rule.n_classes() {
            let mid = (&self.phi.row(c) + &self.phi.row(0)) * 0.5;
            rule.intercepts[c] -= self.gamma.row(c).dot(&mid);
        }
        rule.covariate = Some(CovariateTerms {
            gamma: self.gamma.clone(),
            alpha: self.alpha.clone(),
        });
        rule
    }
}

fn class_means(x: ArrayView2<f64>, labels: &[usize], counts: &[usize]) -> Array2<f64> {
    let mut means = Array2::zeros((counts.len(), x.ncols()));
    for (row, &l) in x.axis_iter(Axis(0)).zip(labels) {
        let mut m = means.row_mut(l);
        m += &row;
    }
    for (mut m, &c) in means.axis_iter_mut(Axis(0)).zip(counts) {
        m.mapv_inplace(|v| v / c as f64);
    }
    means
}

/// Splits a covariate-carrying dataset into the adjusted dataset and the fitted adjustment;
/// datasets without covariates pass through unchanged.
pub(crate) fn prepare(data: &LabeledDataset) -> Result<(LabeledDataset, Option<Adjustment>)> {
    match data.covariates() {
        Some(_) => {
            let adj = Adjustment::fit(data)?;
            Ok((adj.adjust_dataset(data)?, Some(adj)))
        }
        None => Ok((data.clone(), None)),
    }
}

/// Vector predictors: `n × p` data, `n × q` covariates, class labels.
pub fn adjvec(x: Array2<f64>, u: Array2<f64>, labels: &[i64]) -> Result<(Adjustment, Array2<f64>)> {
    let data = LabeledDataset::vector(x, labels)?.with_covariates(u)?;
    let adj = Adjustment::fit(&data)?;
    let adjusted = adj.apply(data.x(), data.covariates().expect("set above"))?;
    Ok((adj, adjusted))
}

/// Tensor predictors: every entry is regressed on the covariates; returns adjusted tensors.
pub fn adjten(xs: &[DenseTensor], u: Array2<f64>, labels: &[i64]) -> Result<(Adjustment, Vec<DenseTensor>)> {
    let data = LabeledDataset::tensor(xs, labels)?.with_covariates(u)?;
    let adj = Adjustment::fit(&data)?;
    let adjusted = adj.apply(data.x(), data.covariates().expect("set above"))?;
    let dims = data.dims().to_vec();
    let tensors = adjusted
        .axis_iter(Axis(0))
        .map(|row| DenseTensor::new(dims.clone(), row.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok((adj, tensors))
}
