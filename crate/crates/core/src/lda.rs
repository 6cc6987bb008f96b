//! Class statistics and the linear Bayes rule shared by every method for prediction.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{dim_err, Result, SpardaError};

/// Priors `n_k / n`, within-class means and (optionally) the pooled covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub counts: Vec<usize>,
    pub priors: Vec<f64>,
    /// `K × d`, row `k` is the mean of class `k`.
    pub means: Array2<f64>,
    /// Pooled within-class covariance with denominator `n - K`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pooled_cov: Option<Array2<f64>>,
}

impl ClassStats {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn n(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn mean(&self, k: usize) -> ArrayView1<'_, f64> {
        self.means.row(k)
    }

    /// `δ̂_k = μ̂_k − μ̂_1` for `k = 2..K`, as a `d × (K−1)` matrix.
    pub fn mean_differences(&self) -> Array2<f64> {
        let k = self.n_classes();
        let d = self.means.ncols();
        Array2::from_shape_fn((d, k - 1), |(j, c)| self.means[[c + 1, j]] - self.means[[0, j]])
    }
}

pub fn estimate_stats(data: &LabeledDataset, with_pooled_cov: bool) -> Result<ClassStats> {
    let k = data.n_classes();
    let counts = data.class_counts();
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(SpardaError::Estimation(format!(
            "class {} has no observations",
            data.classes().code(empty)
        )));
    }
    let n = data.n();
    let d = data.dim();
    let mut means = Array2::<f64>::zeros((k, d));
    for (i, &l) in data.labels().iter().enumerate() {
        let mut row = means.row_mut(l);
        row += &data.row(i);
    }
    for (c, &nc) in counts.iter().enumerate() {
        means.row_mut(c).mapv_inplace(|v| v / nc as f64);
    }
    let pooled_cov = if with_pooled_cov {
        if n <= k {
            return Err(SpardaError::Estimation(format!(
                "pooled covariance needs n > K (n = {n}, K = {k})"
            )));
        }
        let centered = class_centered(data.x(), data.labels(), &means);
        let mut cov = centered.t().dot(&centered);
        cov.mapv_inplace(|v| v / (n - k) as f64);
        Some(cov)
    } else {
        None
    };
    let priors = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(ClassStats {
        counts,
        priors,
        means,
        pooled_cov,
    })
}

/// Rows of `x` minus their class mean.
pub(crate) fn class_centered(x: ArrayView2<f64>, labels: &[usize], means: &Array2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for (i, &l) in labels.iter().enumerate() {
        let mut row = out.row_mut(i);
        row -= &means.row(l);
    }
    out
}

/// Covariate part of a rule: scores gain `γ_kᵀu` and the predictor is adjusted to `x − αu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateTerms {
    /// `K × q`, row 0 is zero.
    pub gamma: Array2<f64>,
    /// `d × q`.
    pub alpha: Array2<f64>,
}

/// Linear rule `argmax_k { a_k + γ_kᵀu + β_kᵀ(x − αu) }` with `β_1 = 0`, `a_1 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantRule {
    /// `K × d`; row 0 is identically zero.
    pub coefficients: Array2<f64>,
    pub intercepts: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub covariate: Option<CovariateTerms>,
}

impl DiscriminantRule {
    /// Plug-in rule for coefficients `β_2..β_K` (columns of `betas`, `d × (K−1)`):
    /// `a_k = log(π_k/π_1) − ½ β_kᵀ(μ_k + μ_1)`.
    pub fn from_coefficients(betas: ArrayView2<f64>, stats: &ClassStats) -> Result<Self> {
        let k = stats.n_classes();
        let d = stats.means.ncols();
        if betas.dim() != (d, k - 1) {
            return dim_err(format!(
                "coefficient block {:?} does not match d = {d}, K = {k}",
                betas.dim()
            ));
        }
        let mut coefficients = Array2::zeros((k, d));
        let mut intercepts = vec![0.0; k];
        for (c, intercept) in intercepts.iter_mut().enumerate().skip(1) {
            let beta = betas.column(c - 1);
            coefficients.row_mut(c).assign(&beta);
            let mid = (&stats.mean(c) + &stats.mean(0)) * 0.5;
            *intercept = (stats.priors[c] / stats.priors[0]).ln() - beta.dot(&mid);
        }
        Ok(Self {
            coefficients,
            intercepts,
            covariate: None,
        })
    }

    /// Constant rule predicting the class with the largest prior.
    pub fn majority(stats: &ClassStats) -> Self {
        let k = stats.n_classes();
        let d = stats.means.ncols();
        Self {
            coefficients: Array2::zeros((k, d)),
            intercepts: (0..k)
                .map(|c| (stats.priors[c] / stats.priors[0]).ln())
                .collect(),
            covariate: None,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.intercepts.len()
    }

    pub fn dim(&self) -> usize {
        self.coefficients.ncols()
    }

    /// Variables with a nonzero coefficient in any class.
    pub fn df(&self) -> usize {
        (0..self.dim())
            .filter(|&j| self.coefficients.column(j).iter().any(|&b| b != 0.0))
            .count()
    }

    pub fn scores(&self, x: ArrayView1<f64>, u: Option<ArrayView1<f64>>) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return dim_err(format!(
                "predictor has {} entries, rule expects {}",
                x.len(),
                self.dim()
            ));
        }
        let adjusted;
        let (x, cov_scores) = match (&self.covariate, u) {
            (Some(terms), Some(u)) => {
                if u.len() != terms.gamma.ncols() {
                    return dim_err(format!(
                        "covariate has {} entries, rule expects {}",
                        u.len(),
                        terms.gamma.ncols()
                    ));
                }
                adjusted = &x - &terms.alpha.dot(&u);
                (adjusted.view(), Some(terms.gamma.dot(&u)))
            }
            (Some(_), None) => {
                return Err(SpardaError::InvalidArgument(
                    "model was fitted with covariates; covariates are required for prediction".into(),
                ))
            }
            (None, _) => (x, None),
        };
        let mut scores: Vec<f64> = (0..self.n_classes())
            .map(|c| self.intercepts[c] + self.coefficients.row(c).dot(&x))
            .collect();
        if let Some(cs) = cov_scores {
            scores.iter_mut().zip(cs.iter()).for_each(|(s, c)| *s += c);
        }
        Ok(scores)
    }

    /// Internal class index (ties go to the lowest index) and the score vector.
    pub fn classify(&self, x: ArrayView1<f64>, u: Option<ArrayView1<f64>>) -> Result<(usize, Vec<f64>)> {
        let scores = self.scores(x, u)?;
        Ok((argmax(&scores), scores))
    }
}

pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

/// One-dimensional LDA on projected data: `score_2 − score_1 = slope·z + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnivariateRule {
    pub slope: f64,
    pub offset: f64,
}

impl UnivariateRule {
    /// Internal label (0 or 1) for a projection; ties go to class 0.
    pub fn classify(&self, z: f64) -> usize {
        usize::from(self.slope * z + self.offset > 0.0)
    }
}

/// Fits LDA on `(labels, projections)` for two classes (internal labels 0 and 1).
///
/// When the projections carry no information (all equal), the rule reduces to the
/// prior-majority constant.
pub fn postfit_univariate(projections: &[f64], labels: &[usize]) -> Result<UnivariateRule> {
    if projections.len() != labels.len() {
        return dim_err(format!(
            "{} projections but {} labels",
            projections.len(),
            labels.len()
        ));
    }
    let mut n = [0usize; 2];
    let mut sum = [0.0; 2];
    for (&z, &l) in projections.iter().zip(labels) {
        if l > 1 {
            return Err(SpardaError::InvalidArgument("post-fit LDA needs binary labels".into()));
        }
        n[l] += 1;
        sum[l] += z;
    }
    if n[0] == 0 || n[1] == 0 {
        return Err(SpardaError::Estimation("post-fit LDA needs both classes".into()));
    }
    let total = (n[0] + n[1]) as f64;
    let m = [sum[0] / n[0] as f64, sum[1] / n[1] as f64];
    let log_prior = (n[1] as f64 / n[0] as f64).ln();
    let ss: f64 = projections
        .iter()
        .zip(labels)
        .map(|(&z, &l)| (z - m[l]).powi(2))
        .sum();
    let diff = m[1] - m[0];
    let spread = projections.iter().fold(0.0f64, |a, &z| a.max(z.abs()));
    if spread == 0.0 || diff.abs() <= f64::EPSILON * spread {
        return Ok(UnivariateRule {
            slope: 0.0,
            offset: log_prior,
        });
    }
    let var = if total > 2.0 { ss / (total - 2.0) } else { 0.0 };
    if var <= f64::EPSILON * spread * spread {
        // perfectly separated with no within-class spread: split at the midpoint
        let slope = diff.signum() / spread;
        return Ok(UnivariateRule {
            slope,
            offset: -slope * (m[0] + m[1]) / 2.0,
        });
    }
    let slope = diff / var;
    Ok(UnivariateRule {
        slope,
        offset: -slope * (m[0] + m[1]) / 2.0 + log_prior,
    })
}

/// Binary rule from a direction `β̂` and its fitted 1-D threshold.
pub fn binary_rule(beta: ArrayView1<f64>, post: UnivariateRule) -> DiscriminantRule {
    let d = beta.len();
    let mut coefficients = Array2::zeros((2, d));
    coefficients.row_mut(1).assign(&(&beta * post.slope));
    DiscriminantRule {
        coefficients,
        intercepts: vec![0.0, post.offset],
        covariate: None,
    }
}

pub(crate) fn project(x: ArrayView2<f64>, beta: ArrayView1<f64>) -> Array1<f64> {
    x.dot(&beta)
}
