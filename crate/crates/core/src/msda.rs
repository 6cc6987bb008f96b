//! Multiclass sparse discriminant analysis.
//!
//! Minimizes `Σ_k {½ β_kᵀΣ̂β_k − δ̂_kᵀβ_k} + λ Σ_j ‖β_{·j}‖` over the `p × (K−1)`
//! coefficient block by blockwise coordinate descent. Two covariance back ends share the
//! update loop: a dense `p × p` pooled covariance, and an on-demand variant that keeps
//! the class-centered data and caches covariance columns only for selected variables.

use std::collections::{BTreeSet, HashMap};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::binary::dsda_fit;
use crate::covadjust::{self, Adjustment};
use crate::data::LabeledDataset;
use crate::error::{Result, SpardaError};
use crate::lda::{class_centered, estimate_stats, ClassStats, DiscriminantRule};
use crate::linalg::{dot, norm2};
use crate::path::PathOptions;
use crate::solver::{group_soft_threshold_in_place, SolverConfig};

/// Above this many variables the automatic choice avoids the dense covariance.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOption {
    /// Two classes solved through the direct binary method.
    Binary,
    /// Dense pooled covariance.
    MultiOriginal,
    /// Covariance columns computed on demand for selected variables only.
    MultiModified,
}

impl ModelOption {
    pub fn auto(p: usize) -> Self {
        if p <= DENSE_LIMIT {
            Self::MultiOriginal
        } else {
            Self::MultiModified
        }
    }
}

/// Source of pooled-covariance entries for the coordinate updates.
pub trait CovarianceColumns {
    fn p(&self) -> usize;
    fn diag(&self, j: usize) -> f64;
    /// Makes column `l` available to [`CovarianceColumns::column`].
    fn prepare(&mut self, l: usize);
    /// Column `l` of the pooled covariance; `prepare(l)` must have been called.
    fn column(&self, l: usize) -> &[f64];
    /// Hint that only these columns are needed from now on.
    fn retain(&mut self, _keep: &BTreeSet<usize>) {}
}

/// Class-centered data laid out variable-major (`p × n`) with the pooling denominator.
#[derive(Debug, Clone)]
struct CenteredData {
    rows: Array2<f64>,
    denom: f64,
}

impl CenteredData {
    fn new(data: &LabeledDataset, stats: &ClassStats) -> Result<Self> {
        let k = data.n_classes();
        let n = data.n();
        if n <= k {
            return Err(SpardaError::Estimation(format!(
                "pooled covariance needs n > K (n = {n}, K = {k})"
            )));
        }
        let centered = class_centered(data.x(), data.labels(), &stats.means);
        Ok(Self {
            rows: centered.t().as_standard_layout().into_owned(),
            denom: (n - k) as f64,
        })
    }

    fn var(&self, j: usize) -> &[f64] {
        self.rows.row(j).to_slice().expect("standard layout")
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        dot(self.var(i), self.var(j)) / self.denom
    }

    fn column(&self, l: usize) -> Vec<f64> {
        (0..self.rows.nrows()).map(|i| self.entry(i, l)).collect()
    }
}

/// Dense pooled covariance, formed once.
#[derive(Debug, Clone)]
pub struct DenseCovariance {
    sigma: Array2<f64>,
}

impl DenseCovariance {
    fn new(centered: &CenteredData) -> Self {
        let p = centered.rows.nrows();
        let mut sigma = Array2::zeros((p, p));
        for l in 0..p {
            for i in 0..=l {
                let v = centered.entry(i, l);
                sigma[[i, l]] = v;
                sigma[[l, i]] = v;
            }
        }
        Self { sigma }
    }

    pub fn from_matrix(sigma: Array2<f64>) -> Self {
        Self { sigma }
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.sigma.view()
    }
}

impl CovarianceColumns for DenseCovariance {
    fn p(&self) -> usize {
        self.sigma.nrows()
    }

    fn diag(&self, j: usize) -> f64 {
        self.sigma[[j, j]]
    }

    fn prepare(&mut self, _l: usize) {}

    fn column(&self, l: usize) -> &[f64] {
        self.sigma.row(l).to_slice().expect("standard layout")
    }
}

/// On-demand covariance: cached diagonal plus columns for currently selected variables.
#[derive(Debug, Clone)]
pub struct LazyCovariance {
    data: CenteredData,
    diag: Vec<f64>,
    cache: HashMap<usize, Vec<f64>>,
}

impl LazyCovariance {
    fn new(data: CenteredData) -> Self {
        let diag = (0..data.rows.nrows()).map(|j| data.entry(j, j)).collect();
        Self {
            data,
            diag,
            cache: HashMap::new(),
        }
    }

    /// Number of covariance columns currently held.
    pub fn cached_columns(&self) -> usize {
        self.cache.len()
    }

    /// Floats held beyond the data itself: diagonal plus cached columns.
    pub fn auxiliary_len(&self) -> usize {
        self.diag.len() + self.cache.values().map(Vec::len).sum::<usize>()
    }
}

impl CovarianceColumns for LazyCovariance {
    fn p(&self) -> usize {
        self.diag.len()
    }

    fn diag(&self, j: usize) -> f64 {
        self.diag[j]
    }

    fn prepare(&mut self, l: usize) {
        if !self.cache.contains_key(&l) {
            let col = self.data.column(l);
            self.cache.insert(l, col);
        }
    }

    fn column(&self, l: usize) -> &[f64] {
        self.cache.get(&l).expect("column prepared before use")
    }

    fn retain(&mut self, keep: &BTreeSet<usize>) {
        self.cache.retain(|l, _| keep.contains(l));
    }
}

/// Outcome of one penalized solve.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSolve {
    pub sweeps: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

/// Blockwise coordinate descent for `½ Σ_k β_kᵀΣ̂β_k − δ_kᵀβ_k + λ Σ_j ‖β_{·j}‖`.
///
/// `beta` (`p × m`) is the warm start and receives the solution.
pub fn group_cd<C: CovarianceColumns>(
    cov: &mut C,
    delta: ArrayView2<f64>,
    lambda: f64,
    cfg: &SolverConfig,
    beta: &mut Array2<f64>,
) -> Result<GroupSolve> {
    cfg.validate()?;
    if lambda.is_nan() || lambda < 0.0 {
        return Err(SpardaError::InvalidArgument(format!("lambda must be ≥ 0, got {lambda}")));
    }
    let p = cov.p();
    let m = delta.ncols();
    if delta.nrows() != p || beta.dim() != (p, m) {
        return Err(SpardaError::Dimension(format!(
            "coefficient block {:?} and mean differences {:?} do not match p = {p}",
            beta.dim(),
            delta.dim()
        )));
    }
    let mut active: BTreeSet<usize> = (0..p)
        .filter(|&j| beta.row(j).iter().any(|&b| b != 0.0))
        .collect();
    for &l in &active {
        cov.prepare(l);
    }
    let mut r = vec![0.0; m];
    let mut trace = Vec::new();

    let mut update = |j: usize, cov: &mut C, beta: &mut Array2<f64>, active: &mut BTreeSet<usize>| -> f64 {
        let s = cov.diag(j);
        if s <= 0.0 {
            return 0.0;
        }
        for (c, rc) in r.iter_mut().enumerate() {
            *rc = delta[[j, c]];
        }
        for &l in active.iter() {
            if l == j {
                continue;
            }
            let sig = cov.column(l)[j];
            if sig != 0.0 {
                for (c, rc) in r.iter_mut().enumerate() {
                    *rc -= sig * beta[[l, c]];
                }
            }
        }
        group_soft_threshold_in_place(&mut r, lambda);
        let mut change = 0.0f64;
        let nonzero = r.iter().any(|&v| v != 0.0);
        for (c, &rc) in r.iter().enumerate() {
            let new = rc / s;
            change = change.max((new - beta[[j, c]]).abs());
            beta[[j, c]] = new;
        }
        if nonzero {
            if active.insert(j) {
                cov.prepare(j);
            }
        } else {
            active.remove(&j);
        }
        change
    };

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < cfg.max_sweeps {
        let mut change = 0.0f64;
        for j in 0..p {
            change = change.max(update(j, cov, beta, &mut active));
        }
        sweeps += 1;
        if cfg.record_objective {
            trace.push(group_objective(cov, delta, beta, lambda));
        }
        if change < cfg.tol {
            converged = true;
            break;
        }
        if cfg.active_set {
            while sweeps < cfg.max_sweeps {
                let snapshot: Vec<usize> = active.iter().copied().collect();
                let mut change = 0.0f64;
                for j in snapshot {
                    change = change.max(update(j, cov, beta, &mut active));
                }
                sweeps += 1;
                if cfg.record_objective {
                    trace.push(group_objective(cov, delta, beta, lambda));
                }
                if change < cfg.tol {
                    break;
                }
            }
        }
    }
    cov.retain(&active);
    Ok(GroupSolve {
        sweeps,
        converged,
        objective_trace: trace,
    })
}

fn active_rows(beta: &Array2<f64>) -> Vec<usize> {
    (0..beta.nrows())
        .filter(|&j| beta.row(j).iter().any(|&b| b != 0.0))
        .collect()
}

/// `Σ̂B − δ` restricted to the columns needed by the active rows.
fn gradient<C: CovarianceColumns>(cov: &mut C, delta: ArrayView2<f64>, beta: &Array2<f64>) -> Array2<f64> {
    let mut g = delta.mapv(|v| -v);
    for l in active_rows(beta) {
        cov.prepare(l);
        let col = cov.column(l);
        for j in 0..g.nrows() {
            for c in 0..g.ncols() {
                g[[j, c]] += col[j] * beta[[l, c]];
            }
        }
    }
    g
}

pub fn group_objective<C: CovarianceColumns>(cov: &mut C, delta: ArrayView2<f64>, beta: &Array2<f64>, lambda: f64) -> f64 {
    let g = gradient(cov, delta, beta);
    // ½βᵀΣβ − δᵀβ = ½βᵀ(Σβ − δ) − ½δᵀβ
    let quad: f64 = (&g * beta).sum() * 0.5 - 0.5 * (&delta * beta).sum();
    let pen: f64 = beta.rows().into_iter().map(|r| norm2(r.as_slice().expect("row"))).sum();
    quad + lambda * pen
}

/// Largest violation of the group optimality conditions.
pub fn group_kkt_residual<C: CovarianceColumns>(cov: &mut C, delta: ArrayView2<f64>, beta: &Array2<f64>, lambda: f64) -> f64 {
    let g = gradient(cov, delta, beta);
    let mut worst = 0.0f64;
    for j in 0..beta.nrows() {
        if cov.diag(j) <= 0.0 {
            continue;
        }
        let b: Vec<f64> = beta.row(j).to_vec();
        let gj: Vec<f64> = g.row(j).to_vec();
        let nb = norm2(&b);
        let v = if nb > 0.0 {
            let res: Vec<f64> = gj.iter().zip(&b).map(|(gi, bi)| gi + lambda * bi / nb).collect();
            norm2(&res)
        } else {
            (norm2(&gj) - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// `max_j ‖δ̂_{·j}‖`: the smallest penalty with an all-zero solution.
pub fn msda_lambda_max(delta: ArrayView2<f64>) -> f64 {
    delta
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsdaFit {
    pub model_option: ModelOption,
    pub lambdas: Vec<f64>,
    /// Per penalty, the `p × (K−1)` block `(β_2, …, β_K)`.
    pub coefficients: Vec<Array2<f64>>,
    pub rules: Vec<DiscriminantRule>,
    pub converged: Vec<bool>,
    pub stats: ClassStats,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub adjustment: Option<Adjustment>,
}

impl MsdaFit {
    pub fn df(&self) -> Vec<usize> {
        self.coefficients.iter().map(|b| active_rows(b).len()).collect()
    }
}

pub(crate) struct MsdaSetup {
    pub data: LabeledDataset,
    pub stats: ClassStats,
    pub delta: Array2<f64>,
    pub adjustment: Option<Adjustment>,
}

pub(crate) fn setup(data: &LabeledDataset) -> Result<MsdaSetup> {
    if data.n_classes() < 2 {
        return Err(SpardaError::InvalidArgument("at least two classes are required".into()));
    }
    let (adjusted, adjustment) = covadjust::prepare(data)?;
    let stats = estimate_stats(&adjusted, false)?;
    let delta = stats.mean_differences();
    Ok(MsdaSetup {
        data: adjusted,
        stats,
        delta,
        adjustment,
    })
}

pub fn msda_lambda_max_for(data: &LabeledDataset) -> Result<f64> {
    Ok(msda_lambda_max(setup(data)?.delta.view()))
}

/// Solves along `lambdas` with warm starts, stopping once `dfmax` is exceeded or a solve
/// fails to converge.
///
/// With a singular pooled covariance (for example `p > n − K`) the objective has no
/// minimizer below some penalty and the iterates drift without bound; every smaller
/// penalty is then ill-posed as well, so the path ends there.
fn run_path<C: CovarianceColumns>(
    cov: &mut C,
    delta: ArrayView2<f64>,
    lambdas: &[f64],
    opts: &PathOptions,
) -> Result<(Vec<Array2<f64>>, Vec<bool>)> {
    let mut beta = Array2::zeros(delta.dim());
    let mut coefs = Vec::with_capacity(lambdas.len());
    let mut converged = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let solve = group_cd(cov, delta, lambda, &opts.solver, &mut beta)?;
        if !solve.converged {
            log::warn!(
                "group descent did not converge at lambda = {lambda} after {} sweeps; path truncated",
                solve.sweeps
            );
            break;
        }
        if opts.dfmax.is_some_and(|m| active_rows(&beta).len() > m) {
            break;
        }
        coefs.push(beta.clone());
        converged.push(solve.converged);
    }
    Ok((coefs, converged))
}

/// Multiclass path. `model_option` defaults to the size-based automatic choice.
pub fn msda_fit(
    data: &LabeledDataset,
    lambdas: Option<&[f64]>,
    model_option: Option<ModelOption>,
    opts: &PathOptions,
) -> Result<MsdaFit> {
    let option = model_option.unwrap_or_else(|| ModelOption::auto(data.dim()));
    if option == ModelOption::Binary {
        if data.n_classes() != 2 {
            return Err(SpardaError::InvalidArgument(format!(
                "the binary option needs two classes, got {}",
                data.n_classes()
            )));
        }
        let path = dsda_fit(data, lambdas, opts)?;
        let p = data.dim();
        return Ok(MsdaFit {
            model_option: option,
            lambdas: path.lambdas(),
            coefficients: path
                .points
                .iter()
                .map(|pt| pt.beta.clone().into_shape_with_order((p, 1)).expect("p entries"))
                .collect(),
            rules: path.points.iter().map(|pt| pt.rule.clone()).collect(),
            converged: path.points.iter().map(|pt| pt.converged).collect(),
            stats: path.stats,
            adjustment: path.adjustment,
        });
    }
    let s = setup(data)?;
    let lambdas = opts.resolve(lambdas, || msda_lambda_max(s.delta.view()))?;
    let centered = CenteredData::new(&s.data, &s.stats)?;
    let (coefs, converged) = match option {
        ModelOption::MultiOriginal => run_path(&mut DenseCovariance::new(&centered), s.delta.view(), &lambdas, opts)?,
        _ => run_path(&mut LazyCovariance::new(centered), s.delta.view(), &lambdas, opts)?,
    };
    let rules = coefs
        .iter()
        .map(|b| {
            let rule = DiscriminantRule::from_coefficients(b.view(), &s.stats)?;
            Ok(match &s.adjustment {
                Some(adj) => adj.attach(rule),
                None => rule,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MsdaFit {
        model_option: option,
        lambdas: lambdas[..coefs.len()].to_vec(),
        coefficients: coefs,
        rules,
        converged,
        stats: s.stats,
        adjustment: s.adjustment,
    })
}

/// Internal class labels for every row, one vector per penalty.
pub fn msda_predict(fit: &MsdaFit, x: ArrayView2<f64>, u: Option<ArrayView2<f64>>) -> Result<Vec<Vec<usize>>> {
    fit.rules
        .iter()
        .map(|rule| {
            (0..x.nrows())
                .map(|i| Ok(rule.classify(x.row(i), u.as_ref().map(|u| u.row(i)))?.0))
                .collect()
        })
        .collect()
}

/// Dense and on-demand covariance sources for a dataset (without covariates), for
/// direct use of [`group_cd`].
pub fn covariance_sources(data: &LabeledDataset) -> Result<(DenseCovariance, LazyCovariance, Array2<f64>)> {
    let stats = estimate_stats(data, false)?;
    let centered = CenteredData::new(data, &stats)?;
    Ok((
        DenseCovariance::new(&centered),
        LazyCovariance::new(centered),
        stats.mean_differences(),
    ))
}
