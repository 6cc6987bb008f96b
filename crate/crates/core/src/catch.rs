//! Tensor discriminant analysis with a Kronecker-structured covariance.
//!
//! The coefficient tensors `B_2..B_K` minimize
//! `Σ_k (⟨B_k, ⟦B_k; Σ̂_1, …, Σ̂_M⟧⟩ − 2⟨B_k, δ̂_k⟩) + λ Σ_j ‖b_{·j}‖`
//! where `j` runs over tensor positions and `b_{·j}` collects the `K−1` entries at `j`.
//! Each contraction `⟦B_k; Σ̂⟧` is kept up to date with rank-one updates, so the full
//! Kronecker product is never formed.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::covadjust::{self, Adjustment};
use crate::data::LabeledDataset;
use crate::error::{dim_err, Result, SpardaError};
use crate::lda::{class_centered, estimate_stats, ClassStats, DiscriminantRule};
use crate::linalg::norm2;
use crate::path::PathOptions;
use crate::solver::{group_soft_threshold_in_place, SolverConfig};
use crate::tensor::{advance, unfold, DenseTensor};

/// Per-mode covariance factors; all but the last have a unit leading diagonal entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KroneckerCov {
    pub factors: Vec<Array2<f64>>,
}

impl KroneckerCov {
    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    /// Entry `(a, b)` of `Σ̂_M ⊗ ⋯ ⊗ Σ̂_1` for multi-indices `a`, `b`.
    pub fn entry(&self, a: &[usize], b: &[usize]) -> f64 {
        self.factors
            .iter()
            .zip(a.iter().zip(b))
            .map(|(f, (&i, &j))| f[[i, j]])
            .product()
    }

    /// Column of the Kronecker product at multi-index `col`, in vec order.
    fn column_into(&self, col: &[usize], out: &mut [f64]) {
        let dims = self.dims();
        let mut idx = vec![0; dims.len()];
        for o in out.iter_mut() {
            *o = self.entry(&idx, col);
            advance(&mut idx, &dims);
        }
    }
}

/// Mode-wise covariance estimator from within-class residual tensors.
///
/// With `E_i = X_i − X̄_{Y_i}` and `W_{i(j)}` its mode-`j` unfolding,
/// `S̃_j = (n ∏_{l≠j} p_l)⁻¹ Σ_i W_{i(j)} W_{i(j)}ᵀ`. Modes before the last are scaled to a
/// unit leading entry; the last carries the overall scale, fixed so that the leading
/// entry of the Kronecker product equals the pooled variance of the first tensor entry.
pub fn estimate_kron_cov(data: &LabeledDataset) -> Result<KroneckerCov> {
    let stats = estimate_stats(data, false)?;
    let n = data.n();
    let k = data.n_classes();
    if n <= k {
        return Err(SpardaError::Estimation(format!("covariance needs n > K (n = {n}, K = {k})")));
    }
    let dims = data.dims().to_vec();
    let m = dims.len();
    let d = data.dim();
    let resid = class_centered(data.x(), data.labels(), &stats.means);
    let mut factors = Vec::with_capacity(m);
    for (mode, &pm) in dims.iter().enumerate() {
        let mut s = Array2::<f64>::zeros((pm, pm));
        for row in resid.axis_iter(Axis(0)) {
            let e = DenseTensor::new(dims.clone(), row.to_vec())?;
            let w = unfold(&e, mode)?;
            s += &w.dot(&w.t());
        }
        s /= (n * (d / pm)) as f64;
        factors.push(s);
    }
    let pooled_var = resid.column(0).iter().map(|v| v * v).sum::<f64>() / (n - k) as f64;
    for (mode, f) in factors.iter_mut().enumerate() {
        let lead = f[[0, 0]];
        if lead.is_nan() || lead <= 0.0 {
            return Err(SpardaError::Degenerate(format!(
                "leading within-class second moment of mode {} is {lead}",
                mode + 1
            )));
        }
        let scale = if mode + 1 < m { 1.0 / lead } else { pooled_var / lead };
        f.mapv_inplace(|v| v * scale);
        if mode + 1 < m {
            f[[0, 0]] = 1.0;
        }
    }
    Ok(KroneckerCov { factors })
}

/// Smallest penalty with an all-zero solution: `2 max_j ‖δ̂_{·j}‖`.
pub fn catch_lambda_max(delta: ArrayView2<f64>) -> f64 {
    2.0 * delta
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0, f64::max)
}

/// Coordinate-descent state for one dataset: covariance, mean differences and the
/// maintained contractions `G_k = ⟦B_k; Σ̂⟧`.
pub struct CatchSolver<'a> {
    cov: &'a KroneckerCov,
    delta: ArrayView2<'a, f64>,
    dims: Vec<usize>,
    /// `∏_m σ̂_{m, j_m j_m}` per position.
    diag: Vec<f64>,
    /// `d × (K−1)` contraction of the current coefficients.
    contraction: Array2<f64>,
    column: Vec<f64>,
}

impl<'a> CatchSolver<'a> {
    pub fn new(cov: &'a KroneckerCov, delta: ArrayView2<'a, f64>) -> Result<Self> {
        let dims = cov.dims();
        let d: usize = dims.iter().product();
        if delta.nrows() != d {
            return dim_err(format!("mean differences have {} rows, covariance dims {dims:?}", delta.nrows()));
        }
        let mut diag = Vec::with_capacity(d);
        let mut idx = vec![0; dims.len()];
        for _ in 0..d {
            diag.push(cov.entry(&idx, &idx));
            advance(&mut idx, &dims);
        }
        Ok(Self {
            cov,
            delta,
            dims,
            diag,
            contraction: Array2::zeros(delta.dim()),
            column: vec![0.0; d],
        })
    }

    fn multi_index(&self, mut j: usize) -> Vec<usize> {
        self.dims
            .iter()
            .map(|&p| {
                let i = j % p;
                j /= p;
                i
            })
            .collect()
    }

    /// Recomputes `G_k` from scratch for a new coefficient block.
    pub fn reset(&mut self, beta: &Array2<f64>) {
        self.contraction.fill(0.0);
        for j in 0..beta.nrows() {
            if beta.row(j).iter().any(|&b| b != 0.0) {
                let delta: Vec<f64> = beta.row(j).to_vec();
                self.add_column(j, &delta);
            }
        }
    }

    fn add_column(&mut self, j: usize, change: &[f64]) {
        let idx = self.multi_index(j);
        let mut col = std::mem::take(&mut self.column);
        self.cov.column_into(&idx, &mut col);
        for (l, &c) in col.iter().enumerate() {
            if c != 0.0 {
                for (k, &dk) in change.iter().enumerate() {
                    self.contraction[[l, k]] += c * dk;
                }
            }
        }
        self.column = col;
    }

    fn update(&mut self, j: usize, beta: &mut Array2<f64>, lambda: f64, r: &mut [f64], change: &mut [f64]) -> f64 {
        let s = self.diag[j];
        if s <= 0.0 {
            return 0.0;
        }
        for (k, rk) in r.iter_mut().enumerate() {
            *rk = self.delta[[j, k]] - self.contraction[[j, k]] + s * beta[[j, k]];
        }
        group_soft_threshold_in_place(r, lambda / 2.0);
        let mut biggest = 0.0f64;
        for (k, &rk) in r.iter().enumerate() {
            let new = rk / s;
            change[k] = new - beta[[j, k]];
            biggest = biggest.max(change[k].abs());
            beta[[j, k]] = new;
        }
        if biggest > 0.0 {
            self.add_column(j, change);
        }
        biggest
    }

    /// Coordinate descent at one penalty from the warm start in `beta`.
    pub fn solve(&mut self, beta: &mut Array2<f64>, lambda: f64, cfg: &SolverConfig) -> Result<(usize, bool, Vec<f64>)> {
        cfg.validate()?;
        if lambda.is_nan() || lambda < 0.0 {
            return Err(SpardaError::InvalidArgument(format!("lambda must be ≥ 0, got {lambda}")));
        }
        if beta.dim() != self.delta.dim() {
            return dim_err(format!("coefficient block {:?}, expected {:?}", beta.dim(), self.delta.dim()));
        }
        self.reset(beta);
        let d = beta.nrows();
        let m = beta.ncols();
        let mut r = vec![0.0; m];
        let mut change = vec![0.0; m];
        let mut trace = Vec::new();
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < cfg.max_sweeps {
            let mut biggest = 0.0f64;
            for j in 0..d {
                biggest = biggest.max(self.update(j, beta, lambda, &mut r, &mut change));
            }
            sweeps += 1;
            if cfg.record_objective {
                trace.push(self.objective(beta, lambda));
            }
            if biggest < cfg.tol {
                converged = true;
                break;
            }
            if cfg.active_set {
                while sweeps < cfg.max_sweeps {
                    let active: BTreeSet<usize> = (0..d)
                        .filter(|&j| beta.row(j).iter().any(|&b| b != 0.0))
                        .collect();
                    let mut biggest = 0.0f64;
                    for j in active {
                        biggest = biggest.max(self.update(j, beta, lambda, &mut r, &mut change));
                    }
                    sweeps += 1;
                    if cfg.record_objective {
                        trace.push(self.objective(beta, lambda));
                    }
                    if biggest < cfg.tol {
                        break;
                    }
                }
            }
        }
        Ok((sweeps, converged, trace))
    }

    /// Objective at `beta` using the maintained contraction.
    pub fn objective(&self, beta: &Array2<f64>, lambda: f64) -> f64 {
        let quad = (&self.contraction * beta).sum() - 2.0 * (&self.delta * beta).sum();
        let pen: f64 = beta.rows().into_iter().map(|r| r.dot(&r).sqrt()).sum();
        quad + lambda * pen
    }

    /// Largest violation of the group optimality conditions, from a fresh contraction.
    pub fn kkt_residual(&mut self, beta: &Array2<f64>, lambda: f64) -> f64 {
        self.reset(beta);
        let mut worst = 0.0f64;
        for j in 0..beta.nrows() {
            if self.diag[j] <= 0.0 {
                continue;
            }
            let grad: Vec<f64> = (0..beta.ncols())
                .map(|k| 2.0 * (self.contraction[[j, k]] - self.delta[[j, k]]))
                .collect();
            let b: Vec<f64> = beta.row(j).to_vec();
            let nb = norm2(&b);
            let v = if nb > 0.0 {
                let res: Vec<f64> = grad.iter().zip(&b).map(|(g, bi)| g + lambda * bi / nb).collect();
                norm2(&res)
            } else {
                (norm2(&grad) - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatchFit {
    pub dims: Vec<usize>,
    pub lambdas: Vec<f64>,
    /// Per penalty, `vec(B_2), …, vec(B_K)` as the columns of a `d × (K−1)` block.
    pub coefficients: Vec<Array2<f64>>,
    pub rules: Vec<DiscriminantRule>,
    pub converged: Vec<bool>,
    pub stats: ClassStats,
    pub covariance: KroneckerCov,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub adjustment: Option<Adjustment>,
}

impl CatchFit {
    pub fn df(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .map(|b| b.rows().into_iter().filter(|r| r.iter().any(|&v| v != 0.0)).count())
            .collect()
    }

    /// Coefficient tensor of class `k ≥ 1` (internal index) at path point `i`.
    pub fn coefficient_tensor(&self, i: usize, k: usize) -> DenseTensor {
        DenseTensor::new(self.dims.clone(), self.coefficients[i].column(k - 1).to_vec())
            .expect("block rows match dims")
    }
}

pub fn catch_lambda_max_for(data: &LabeledDataset) -> Result<f64> {
    let (adjusted, _) = covadjust::prepare(data)?;
    let stats = estimate_stats(&adjusted, false)?;
    Ok(catch_lambda_max(stats.mean_differences().view()))
}

pub fn catch_fit(data: &LabeledDataset, lambdas: Option<&[f64]>, opts: &PathOptions) -> Result<CatchFit> {
    if data.n_classes() < 2 {
        return Err(SpardaError::InvalidArgument("at least two classes are required".into()));
    }
    let (adjusted, adjustment) = covadjust::prepare(data)?;
    let stats = estimate_stats(&adjusted, false)?;
    let delta = stats.mean_differences();
    let covariance = estimate_kron_cov(&adjusted)?;
    let lambdas = opts.resolve(lambdas, || catch_lambda_max(delta.view()))?;
    let mut solver = CatchSolver::new(&covariance, delta.view())?;
    let mut beta = Array2::zeros(delta.dim());
    let mut coefficients = Vec::new();
    let mut converged = Vec::new();
    for &lambda in &lambdas {
        let (sweeps, ok, _) = solver.solve(&mut beta, lambda, &opts.solver)?;
        if !ok {
            log::warn!("tensor descent did not converge at lambda = {lambda} after {sweeps} sweeps");
        }
        let df = beta.rows().into_iter().filter(|r| r.iter().any(|&v| v != 0.0)).count();
        if opts.dfmax.is_some_and(|m| df > m) {
            break;
        }
        coefficients.push(beta.clone());
        converged.push(ok);
    }
    let rules = coefficients
        .iter()
        .map(|b| {
            let rule = DiscriminantRule::from_coefficients(b.view(), &stats)?;
            Ok(match &adjustment {
                Some(adj) => adj.attach(rule),
                None => rule,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CatchFit {
        dims: adjusted.dims().to_vec(),
        lambdas: lambdas[..coefficients.len()].to_vec(),
        coefficients,
        rules,
        converged,
        stats,
        covariance,
        adjustment,
    })
}

/// Matrix-valued predictors: the two-way special case.
pub fn catch_matrix(data: &LabeledDataset, lambdas: Option<&[f64]>, opts: &PathOptions) -> Result<CatchFit> {
    if data.dims().len() != 2 {
        return Err(SpardaError::InvalidArgument(format!(
            "matrix predictors must have two modes, got dims {:?}",
            data.dims()
        )));
    }
    catch_fit(data, lambdas, opts)
}

/// Internal class labels per penalty for tensors given as `vec` rows.
pub fn catch_predict(fit: &CatchFit, x: ArrayView2<f64>, u: Option<ArrayView2<f64>>) -> Result<Vec<Vec<usize>>> {
    fit.rules
        .iter()
        .map(|rule| {
            (0..x.nrows())
                .map(|i| Ok(rule.classify(x.row(i), u.as_ref().map(|u| u.row(i)))?.0))
                .collect()
        })
        .collect()
}
