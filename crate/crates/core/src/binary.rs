//! Two-class sparse discriminant paths.
//!
//! The direct method solves a lasso regression of a class-coded response; the ROAD
//! and optimal-scoring solutions are exact rescalings of its path, so all three share
//! one solver run.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::covadjust::{self, Adjustment};
use crate::data::LabeledDataset;
use crate::error::Result;
use crate::lda::{binary_rule, estimate_stats, postfit_univariate, project, ClassStats, DiscriminantRule};
use crate::path::PathOptions;
use crate::solver::{lasso_cd, LassoProblem, LassoSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryMethod {
    Dsda,
    Road,
    Sos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryPoint {
    /// Penalty on the method's own scale.
    pub lambda: f64,
    /// ROAD only: the penalty of the constrained problem for which `beta` is stationary.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub road_lambda: Option<f64>,
    pub beta: Array1<f64>,
    pub rule: DiscriminantRule,
    pub converged: bool,
}

impl BinaryPoint {
    pub fn df(&self) -> usize {
        self.beta.iter().filter(|&&b| b != 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryPath {
    pub method: BinaryMethod,
    pub points: Vec<BinaryPoint>,
    /// Statistics of the (covariate-adjusted) training predictors.
    pub stats: ClassStats,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub adjustment: Option<Adjustment>,
}

impl BinaryPath {
    pub fn lambdas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lambda).collect()
    }
}

/// Response `−n/n_1` for the first class and `n/n_2` for the second; it sums to zero.
pub fn class_response(labels: &[usize], counts: &[usize]) -> Array1<f64> {
    let n = labels.len() as f64;
    labels
        .iter()
        .map(|&l| if l == 0 { -n / counts[0] as f64 } else { n / counts[1] as f64 })
        .collect()
}

/// The lasso problem behind the direct method, on predictors already adjusted for covariates.
pub fn dsda_problem(data: &LabeledDataset) -> Result<LassoProblem> {
    data.require_classes(2, "binary discriminant analysis")?;
    let y = class_response(data.labels(), &data.class_counts());
    LassoProblem::new(data.x(), y.view())
}

/// Smallest penalty with an all-zero direct-method solution.
pub fn dsda_lambda_max(data: &LabeledDataset) -> Result<f64> {
    let (adjusted, _) = covadjust::prepare(data)?;
    Ok(dsda_problem(&adjusted)?.lambda_max())
}

/// Optimal-scoring upper bound: the smallest penalty whose direct-method counterpart
/// `λ/√(π̂_1π̂_2)` reaches the direct bound, so the fit there is exactly zero.
pub fn sos_lambda_max(data: &LabeledDataset) -> Result<f64> {
    let prep = prepare(data)?;
    let scale = sos_scale(&prep.stats);
    let direct = prep.problem.lambda_max();
    let mut top = direct * scale;
    while top / scale < direct {
        top = top.next_up();
    }
    Ok(top)
}

fn sos_scale(stats: &ClassStats) -> f64 {
    (stats.priors[0] * stats.priors[1]).sqrt()
}

struct Prepared {
    data: LabeledDataset,
    stats: ClassStats,
    adjustment: Option<Adjustment>,
    problem: LassoProblem,
}

fn prepare(data: &LabeledDataset) -> Result<Prepared> {
    data.require_classes(2, "binary discriminant analysis")?;
    let (adjusted, adjustment) = covadjust::prepare(data)?;
    let stats = estimate_stats(&adjusted, false)?;
    let problem = dsda_problem(&adjusted)?;
    Ok(Prepared {
        data: adjusted,
        stats,
        adjustment,
        problem,
    })
}

fn solve_chain(prob: &LassoProblem, lambdas: &[f64], opts: &PathOptions) -> Result<Vec<LassoSolution>> {
    let mut out: Vec<LassoSolution> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let warm = out.last().map(|s| s.beta.view());
        let sol = lasso_cd(prob, lambda, &opts.solver, warm)?;
        if !sol.converged {
            log::warn!("lasso did not converge at lambda = {lambda} after {} sweeps", sol.sweeps);
        }
        let df = sol.beta.iter().filter(|&&b| b != 0.0).count();
        out.push(sol);
        if opts.dfmax.is_some_and(|m| df > m) {
            out.pop();
            break;
        }
    }
    Ok(out)
}

fn rule_for(prep: &Prepared, beta: ArrayView1<f64>) -> Result<DiscriminantRule> {
    let z = project(prep.data.x(), beta);
    let post = postfit_univariate(z.as_slice().expect("contiguous"), prep.data.labels())?;
    let rule = binary_rule(beta, post);
    Ok(match &prep.adjustment {
        Some(adj) => adj.attach(rule),
        None => rule,
    })
}

fn finish(prep: Prepared, method: BinaryMethod, points: Vec<BinaryPoint>) -> BinaryPath {
    BinaryPath {
        method,
        points,
        stats: prep.stats,
        adjustment: prep.adjustment,
    }
}

/// Direct sparse discriminant path. Without `lambdas` the automatic grid is used.
pub fn dsda_fit(data: &LabeledDataset, lambdas: Option<&[f64]>, opts: &PathOptions) -> Result<BinaryPath> {
    let prep = prepare(data)?;
    let lambdas = opts.resolve(lambdas, || prep.problem.lambda_max())?;
    let sols = solve_chain(&prep.problem, &lambdas, opts)?;
    let points = sols
        .into_iter()
        .zip(&lambdas)
        .map(|(sol, &lambda)| {
            Ok(BinaryPoint {
                lambda,
                road_lambda: None,
                rule: rule_for(&prep, sol.beta.view())?,
                beta: sol.beta,
                converged: sol.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(prep, BinaryMethod::Dsda, points))
}

/// ROAD path: each nonzero direct-method solution rescaled to satisfy `βᵀ(μ̂_2 − μ̂_1) = 2`.
///
/// The supplied penalties are passed to the direct method unchanged. An all-zero solution
/// has no rescaled counterpart; it is kept as a degenerate point with a zero direction and
/// no constrained penalty, so the path stays aligned with the grid.
pub fn road_fit(data: &LabeledDataset, lambdas: Option<&[f64]>, opts: &PathOptions) -> Result<BinaryPath> {
    let prep = prepare(data)?;
    let lambdas = opts.resolve(lambdas, || prep.problem.lambda_max())?;
    let sols = solve_chain(&prep.problem, &lambdas, opts)?;
    let diff = &prep.stats.mean(1) - &prep.stats.mean(0);
    let n = prep.data.n() as f64;
    let points = sols
        .into_iter()
        .zip(&lambdas)
        .map(|(sol, &lambda)| {
            let inner = sol.beta.dot(&diff);
            let (beta, road_lambda) = if inner > 0.0 {
                let c = 2.0 / inner;
                (&sol.beta * c, Some(c * lambda * n / (n - 2.0)))
            } else {
                log::debug!("degenerate ROAD point at lambda = {lambda}");
                (Array1::zeros(sol.beta.len()), None)
            };
            Ok(BinaryPoint {
                lambda,
                road_lambda,
                rule: rule_for(&prep, beta.view())?,
                beta,
                converged: sol.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(prep, BinaryMethod::Road, points))
}

/// Optimal-scoring path via `β̂^SOS(λ) = √(π̂_1π̂_2)·β̂^DSDA(λ/√(π̂_1π̂_2))`.
pub fn sos_fit(data: &LabeledDataset, lambdas: Option<&[f64]>, opts: &PathOptions) -> Result<BinaryPath> {
    let prep = prepare(data)?;
    let scale = sos_scale(&prep.stats);
    let (sos_lambdas, dsda_lambdas): (Vec<f64>, Vec<f64>) = match lambdas {
        Some(ls) => {
            crate::path::validate_lambdas(ls)?;
            (ls.to_vec(), ls.iter().map(|l| l / scale).collect())
        }
        None => {
            let grid = opts.grid(prep.problem.lambda_max())?.values;
            (grid.iter().map(|l| l * scale).collect(), grid)
        }
    };
    let sols = solve_chain(&prep.problem, &dsda_lambdas, opts)?;
    let points = sols
        .into_iter()
        .zip(&sos_lambdas)
        .map(|(sol, &lambda)| {
            let beta = &sol.beta * scale;
            Ok(BinaryPoint {
                lambda,
                road_lambda: None,
                rule: rule_for(&prep, beta.view())?,
                beta,
                converged: sol.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(prep, BinaryMethod::Sos, points))
}

pub fn binary_fit(
    method: BinaryMethod,
    data: &LabeledDataset,
    lambdas: Option<&[f64]>,
    opts: &PathOptions,
) -> Result<BinaryPath> {
    match method {
        BinaryMethod::Dsda => dsda_fit(data, lambdas, opts),
        BinaryMethod::Road => road_fit(data, lambdas, opts),
        BinaryMethod::Sos => sos_fit(data, lambdas, opts),
    }
}
