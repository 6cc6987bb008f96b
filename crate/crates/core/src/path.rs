//! Penalty grids shared by all path fitters.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpardaError};
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// Decreasing penalty sequence starting at the all-zero bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub lambda_max: f64,
    pub lambda_min_ratio: f64,
    pub nlambda: usize,
    pub spacing: Spacing,
    pub values: Vec<f64>,
}

impl LambdaGrid {
    pub fn new(lambda_max: f64, nlambda: usize, lambda_min_ratio: f64, spacing: Spacing) -> Result<Self> {
        if nlambda == 0 {
            return Err(SpardaError::InvalidArgument("nlambda must be at least 1".into()));
        }
        if !(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0) {
            return Err(SpardaError::InvalidArgument(format!(
                "lambda_min_ratio must lie in (0, 1), got {lambda_min_ratio}"
            )));
        }
        if !(lambda_max >= 0.0 && lambda_max.is_finite()) {
            return Err(SpardaError::InvalidArgument(format!("invalid lambda_max {lambda_max}")));
        }
        if lambda_max == 0.0 {
            log::warn!("zero mean differences: the penalty grid collapses to a single point at 0");
            return Ok(Self {
                lambda_max,
                lambda_min_ratio,
                nlambda: 1,
                spacing,
                values: vec![0.0],
            });
        }
        let lo = lambda_max * lambda_min_ratio;
        let values = if nlambda == 1 {
            vec![lambda_max]
        } else {
            let steps = (nlambda - 1) as f64;
            (0..nlambda)
                .map(|i| {
                    let t = i as f64 / steps;
                    match spacing {
                        Spacing::Linear => lambda_max - t * (lambda_max - lo),
                        Spacing::Log => (lambda_max.ln() + t * (lo.ln() - lambda_max.ln())).exp(),
                    }
                })
                .collect()
        };
        let mut values = values;
        values[0] = lambda_max;
        Ok(Self {
            lambda_max,
            lambda_min_ratio,
            nlambda: values.len(),
            spacing,
            values,
        })
    }
}

/// Settings common to every path fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathOptions {
    pub nlambda: usize,
    pub lambda_min_ratio: f64,
    pub spacing: Spacing,
    /// Stop the path once more than this many variables are selected.
    pub dfmax: Option<usize>,
    pub solver: SolverConfig,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self {
            nlambda: 100,
            lambda_min_ratio: 0.05,
            spacing: Spacing::Linear,
            dfmax: None,
            solver: SolverConfig::default(),
        }
    }
}

impl PathOptions {
    pub fn grid(&self, lambda_max: f64) -> Result<LambdaGrid> {
        LambdaGrid::new(lambda_max, self.nlambda, self.lambda_min_ratio, self.spacing)
    }

    /// The supplied penalties, or the automatic grid from `lambda_max`.
    pub(crate) fn resolve(&self, lambdas: Option<&[f64]>, lambda_max: impl FnOnce() -> f64) -> Result<Vec<f64>> {
        match lambdas {
            Some(ls) => {
                validate_lambdas(ls)?;
                Ok(ls.to_vec())
            }
            None => Ok(self.grid(lambda_max())?.values),
        }
    }
}

pub(crate) fn validate_lambdas(ls: &[f64]) -> Result<()> {
    if ls.is_empty() {
        return Err(SpardaError::InvalidArgument("empty lambda sequence".into()));
    }
    if let Some(bad) = ls.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(SpardaError::InvalidArgument(format!("invalid lambda {bad}")));
    }
    if ls.windows(2).any(|w| w[1] >= w[0]) {
        return Err(SpardaError::InvalidArgument("lambdas must be strictly decreasing".into()));
    }
    Ok(())
}
