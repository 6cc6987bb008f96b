//! Thresholding operators and the lasso coordinate-descent solver.
//!
//! The lasso objective is normalized as
//! `n⁻¹ Σ_i (y_i − β_0 − x_iᵀβ)² + λ Σ_j |β_j|`, so the all-zero solution holds for
//! `λ ≥ max_j |2 n⁻¹ x̃_jᵀ ỹ|` where tildes denote centered data.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, SpardaError};
use crate::linalg::{dot, norm2};

/// `sign(z)·max(|z| − t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// `v·(1 − t/‖v‖)_+`; the zero vector when `‖v‖ ≤ t`.
pub fn group_soft_threshold(v: &[f64], t: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    group_soft_threshold_in_place(&mut out, t);
    out
}

pub(crate) fn group_soft_threshold_in_place(v: &mut [f64], t: f64) {
    let norm = norm2(v);
    if norm <= t {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else {
        let scale = 1.0 - t / norm;
        v.iter_mut().for_each(|x| *x *= scale);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_sweeps: usize,
    /// Convergence threshold on the largest absolute coefficient change in a full sweep.
    pub tol: f64,
    pub active_set: bool,
    /// Record the objective after every sweep (diagnostics and tests).
    #[serde(default)]
    pub record_objective: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 100_000,
            tol: 1e-7,
            active_set: true,
            record_objective: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 || self.tol.is_nan() || self.tol <= 0.0 {
            return Err(SpardaError::InvalidArgument(format!(
                "solver needs max_sweeps ≥ 1 and tol > 0, got {} and {}",
                self.max_sweeps, self.tol
            )));
        }
        Ok(())
    }
}

/// Centered least-squares data for the lasso.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    /// `p × n`: row `j` is the centered column `x̃_j`.
    columns: Array2<f64>,
    response: Array1<f64>,
    x_means: Array1<f64>,
    y_mean: f64,
    /// `n⁻¹‖x̃_j‖²`.
    col_sq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub beta: Array1<f64>,
    pub intercept: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective after each sweep when requested in the config.
    pub objective_trace: Vec<f64>,
}

impl LassoProblem {
    pub fn new(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Self> {
        let (n, _) = x.dim();
        if y.len() != n {
            return dim_err(format!("design has {n} rows, response has {}", y.len()));
        }
        if n < 2 {
            return Err(SpardaError::InvalidArgument("lasso needs at least two observations".into()));
        }
        let x_means = x.mean_axis(Axis(0)).expect("n ≥ 2");
        let y_mean = y.mean().expect("n ≥ 2");
        let mut columns = x.t().as_standard_layout().into_owned();
        for (mut col, &m) in columns.rows_mut().into_iter().zip(x_means.iter()) {
            col.mapv_inplace(|v| v - m);
        }
        let response = y.mapv(|v| v - y_mean);
        let col_sq = columns
            .rows()
            .into_iter()
            .map(|c| c.dot(&c) / n as f64)
            .collect();
        Ok(Self {
            columns,
            response,
            x_means,
            y_mean,
            col_sq,
        })
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn p(&self) -> usize {
        self.columns.nrows()
    }

    fn column(&self, j: usize) -> &[f64] {
        self.columns
            .row(j)
            .to_slice()
            .expect("columns stored contiguously")
    }

    fn response_slice(&self) -> &[f64] {
        self.response.as_slice().expect("contiguous")
    }

    /// Half-gradients `n⁻¹ x̃_jᵀ r` at residual `r`.
    fn correlations(&self, r: &[f64]) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.p()).map(|j| dot(self.column(j), r) / n).collect()
    }

    /// Smallest λ with an all-zero solution.
    pub fn lambda_max(&self) -> f64 {
        2.0 * self
            .correlations(self.response_slice())
            .into_iter()
            .fold(0.0f64, |m, c| m.max(c.abs()))
    }

    fn residual(&self, beta: &[f64]) -> Vec<f64> {
        let mut r = self.response.to_vec();
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (ri, &x) in r.iter_mut().zip(self.column(j)) {
                    *ri -= b * x;
                }
            }
        }
        r
    }

    /// Objective at `(β, β_0)` with β_0 the optimal intercept for `β`.
    pub fn objective(&self, beta: ArrayView1<f64>, lambda: f64) -> f64 {
        let r = self.residual(beta.as_slice().expect("contiguous"));
        dot(&r, &r) / self.n() as f64 + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Largest violation of the lasso optimality conditions at `β`.
    pub fn kkt_residual(&self, beta: ArrayView1<f64>, lambda: f64) -> f64 {
        let r = self.residual(beta.as_slice().expect("contiguous"));
        self.correlations(&r)
            .iter()
            .zip(beta.iter())
            .map(|(&c, &b)| {
                let g = 2.0 * c;
                if b != 0.0 {
                    (g - lambda * b.signum()).abs()
                } else {
                    (g.abs() - lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn intercept_for(&self, beta: ArrayView1<f64>) -> f64 {
        self.y_mean - self.x_means.dot(&beta)
    }
}

/// Cyclic coordinate descent with an active-set outer loop.
///
/// Returns the best iterate with `converged = false` if `max_sweeps` runs out.
pub fn lasso_cd(
    prob: &LassoProblem,
    lambda: f64,
    cfg: &SolverConfig,
    warm: Option<ArrayView1<f64>>,
) -> Result<LassoSolution> {
    cfg.validate()?;
    if lambda.is_nan() || lambda < 0.0 {
        return Err(SpardaError::InvalidArgument(format!("lambda must be ≥ 0, got {lambda}")));
    }
    let p = prob.p();
    let n = prob.n() as f64;
    let mut beta = match warm {
        Some(w) if w.len() == p => w.to_vec(),
        Some(w) => return dim_err(format!("warm start has {} entries, expected {p}", w.len())),
        None => vec![0.0; p],
    };
    let mut r = prob.residual(&beta);
    let half_lambda = lambda / 2.0;
    let mut trace = Vec::new();

    let update = |j: usize, beta: &mut [f64], r: &mut [f64]| -> f64 {
        let v = prob.col_sq[j];
        if v == 0.0 {
            return 0.0;
        }
        let col = prob.column(j);
        let old = beta[j];
        let z = dot(col, r) / n + v * old;
        let new = soft_threshold(z, half_lambda) / v;
        let delta = new - old;
        if delta != 0.0 {
            beta[j] = new;
            for (ri, &x) in r.iter_mut().zip(col) {
                *ri -= delta * x;
            }
        }
        delta.abs()
    };

    let mut sweeps = 0;
    let mut converged = false;
    let all: Vec<usize> = (0..p).collect();
    while sweeps < cfg.max_sweeps {
        let change = all.iter().fold(0.0f64, |m, &j| m.max(update(j, &mut beta, &mut r)));
        sweeps += 1;
        if cfg.record_objective {
            trace.push(objective_from_residual(&r, &beta, lambda, n));
        }
        if change < cfg.tol {
            converged = true;
            break;
        }
        if cfg.active_set {
            let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
            while sweeps < cfg.max_sweeps {
                let change = active
                    .iter()
                    .fold(0.0f64, |m, &j| m.max(update(j, &mut beta, &mut r)));
                sweeps += 1;
                if cfg.record_objective {
                    trace.push(objective_from_residual(&r, &beta, lambda, n));
                }
                if change < cfg.tol {
                    break;
                }
            }
        }
    }
    let beta = Array1::from(beta);
    let intercept = prob.intercept_for(beta.view());
    Ok(LassoSolution {
        beta,
        intercept,
        sweeps,
        converged,
        objective_trace: trace,
    })
}

fn objective_from_residual(r: &[f64], beta: &[f64], lambda: f64, n: f64) -> f64 {
    dot(r, r) / n + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}
