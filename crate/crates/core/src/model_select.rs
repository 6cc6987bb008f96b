//! One entry point for every method, penalty-grid generation and k-fold cross-validation.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binary::{self, BinaryMethod, BinaryPath};
use crate::catch::{self, KroneckerCov};
use crate::data::{ClassLabels, LabeledDataset};
use crate::error::{dim_err, Result, SpardaError};
use crate::lda::{ClassStats, DiscriminantRule};
use crate::msda::{self, ModelOption};
use crate::path::{LambdaGrid, PathOptions};
use crate::sesda::{self, MonotoneTransform, TransformVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dsda,
    Road,
    Sos,
    Sesda,
    Msda,
    Catch,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Dsda,
        Method::Road,
        Method::Sos,
        Method::Sesda,
        Method::Msda,
        Method::Catch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dsda => "dsda",
            Method::Road => "road",
            Method::Sos => "sos",
            Method::Sesda => "sesda",
            Method::Msda => "msda",
            Method::Catch => "catch",
        }
    }

    pub fn is_binary(self) -> bool {
        matches!(self, Method::Dsda | Method::Road | Method::Sos | Method::Sesda)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = SpardaError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SpardaError::InvalidArgument(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FitOptions {
    pub path: PathOptions,
    /// Multiclass back end; chosen by dimension when absent.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub model_option: Option<ModelOption>,
    #[serde(default)]
    pub transform: TransformVariant,
}

/// A fitted path of any method, with everything needed to predict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub method: Method,
    pub dims: Vec<usize>,
    pub classes: ClassLabels,
    pub lambdas: Vec<f64>,
    /// Per penalty, the `d × (K−1)` coefficient block (for tensors, columns hold `vec(B_k)`).
    pub coefficients: Vec<Array2<f64>>,
    pub rules: Vec<DiscriminantRule>,
    pub converged: Vec<bool>,
    pub stats: ClassStats,
    pub uses_covariates: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    /// ROAD only: per point, the constrained-problem penalty (`None` where degenerate).
    pub road_lambdas: Option<Vec<Option<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub model_option: Option<ModelOption>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub transform: Option<MonotoneTransform>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub covariance: Option<KroneckerCov>,
}

impl FittedModel {
    fn from_binary(method: Method, data: &LabeledDataset, path: BinaryPath, transform: Option<MonotoneTransform>) -> Self {
        let d = data.dim();
        let road = path.method == BinaryMethod::Road;
        Self {
            method,
            dims: data.dims().to_vec(),
            classes: data.classes().clone(),
            lambdas: path.lambdas(),
            coefficients: path
                .points
                .iter()
                .map(|p| p.beta.clone().into_shape_with_order((d, 1)).expect("d entries"))
                .collect(),
            rules: path.points.iter().map(|p| p.rule.clone()).collect(),
            converged: path.points.iter().map(|p| p.converged).collect(),
            stats: path.stats,
            uses_covariates: path.adjustment.is_some(),
            road_lambdas: road.then(|| path.points.iter().map(|p| p.road_lambda).collect()),
            model_option: None,
            transform,
            covariance: None,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn df(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .map(|b| b.rows().into_iter().filter(|r| r.iter().any(|&v| v != 0.0)).count())
            .collect()
    }

    fn check_inputs(&self, x: ArrayView2<f64>, u: Option<ArrayView2<f64>>) -> Result<()> {
        let d: usize = self.dims.iter().product();
        if x.ncols() != d {
            return dim_err(format!("model expects {d} predictor entries, got {}", x.ncols()));
        }
        match (self.uses_covariates, u) {
            (true, None) => Err(SpardaError::InvalidArgument(
                "model was fitted with covariates; covariates are required for prediction".into(),
            )),
            (_, Some(u)) if u.nrows() != x.nrows() => {
                dim_err(format!("{} covariate rows for {} observations", u.nrows(), x.nrows()))
            }
            _ => Ok(()),
        }
    }

    /// Internal class indices, one vector per penalty.
    pub fn predict_internal(&self, x: ArrayView2<f64>, u: Option<ArrayView2<f64>>) -> Result<Vec<Vec<usize>>> {
        self.check_inputs(x, u)?;
        let transformed;
        let x = match &self.transform {
            Some(t) => {
                transformed = t.apply(x)?;
                transformed.view()
            }
            None => x,
        };
        let u = if self.uses_covariates { u } else { None };
        self.rules
            .par_iter()
            .map(|rule| {
                (0..x.nrows())
                    .map(|i| Ok(rule.classify(x.row(i), u.as_ref().map(|u| u.row(i)))?.0))
                    .collect()
            })
            .collect()
    }

    /// Class codes as seen in the training data, one vector per penalty.
    pub fn predict(&self, x: ArrayView2<f64>, u: Option<ArrayView2<f64>>) -> Result<Vec<Vec<i64>>> {
        Ok(self
            .predict_internal(x, u)?
            .into_iter()
            .map(|labels| self.classes.decode(&labels))
            .collect())
    }

    /// Misclassification rate per penalty on a labeled dataset.
    pub fn error_rates(&self, data: &LabeledDataset) -> Result<Vec<f64>> {
        let truth = self.classes.encode(&data.original_labels())?;
        let preds = self.predict_internal(data.x(), data.covariates())?;
        Ok(preds
            .iter()
            .map(|p| misclassification(p, &truth))
            .collect())
    }
}

pub fn misclassification(pred: &[usize], truth: &[usize]) -> f64 {
    let wrong = pred.iter().zip(truth).filter(|(a, b)| a != b).count();
    wrong as f64 / truth.len().max(1) as f64
}

fn check_method_data(method: Method, data: &LabeledDataset, opts: &FitOptions) -> Result<()> {
    if method.is_binary() && data.n_classes() != 2 {
        return Err(SpardaError::InvalidArgument(format!(
            "{method} needs exactly two classes, got {}",
            data.n_classes()
        )));
    }
    if opts.model_option.is_some() && method != Method::Msda {
        return Err(SpardaError::InvalidArgument("model_option applies only to msda".into()));
    }
    Ok(())
}

/// Fits `method` along `lambdas`, or along the automatic grid when absent.
pub fn fit(method: Method, data: &LabeledDataset, lambdas: Option<&[f64]>, opts: &FitOptions) -> Result<FittedModel> {
    check_method_data(method, data, opts)?;
    let popts = &opts.path;
    let model = match method {
        Method::Dsda => FittedModel::from_binary(method, data, binary::dsda_fit(data, lambdas, popts)?, None),
        Method::Road => FittedModel::from_binary(method, data, binary::road_fit(data, lambdas, popts)?, None),
        Method::Sos => FittedModel::from_binary(method, data, binary::sos_fit(data, lambdas, popts)?, None),
        Method::Sesda => {
            let f = sesda::sesda_fit(data, lambdas, opts.transform, popts)?;
            FittedModel::from_binary(method, data, f.path, Some(f.transform))
        }
        Method::Msda => {
            let f = msda::msda_fit(data, lambdas, opts.model_option, popts)?;
            FittedModel {
                method,
                dims: data.dims().to_vec(),
                classes: data.classes().clone(),
                lambdas: f.lambdas,
                coefficients: f.coefficients,
                rules: f.rules,
                converged: f.converged,
                stats: f.stats,
                uses_covariates: f.adjustment.is_some(),
                road_lambdas: None,
                model_option: Some(f.model_option),
                transform: None,
                covariance: None,
            }
        }
        Method::Catch => {
            let f = catch::catch_fit(data, lambdas, popts)?;
            FittedModel {
                method,
                dims: f.dims,
                classes: data.classes().clone(),
                lambdas: f.lambdas,
                coefficients: f.coefficients,
                rules: f.rules,
                converged: f.converged,
                stats: f.stats,
                uses_covariates: f.adjustment.is_some(),
                road_lambdas: None,
                model_option: None,
                transform: None,
                covariance: Some(f.covariance),
            }
        }
    };
    Ok(model)
}

/// Smallest penalty (on the method's own scale) with an all-zero fit.
pub fn lambda_max(method: Method, data: &LabeledDataset, opts: &FitOptions) -> Result<f64> {
    check_method_data(method, data, opts)?;
    match method {
        Method::Dsda | Method::Road => binary::dsda_lambda_max(data),
        Method::Sos => binary::sos_lambda_max(data),
        Method::Sesda => {
            let t = MonotoneTransform::fit(data, opts.transform)?;
            binary::dsda_lambda_max(&data.with_predictors(t.apply(data.x())?)?)
        }
        Method::Msda => match opts.model_option {
            Some(ModelOption::Binary) => binary::dsda_lambda_max(data),
            _ => msda::msda_lambda_max_for(data),
        },
        Method::Catch => catch::catch_lambda_max_for(data),
    }
}

/// The automatic decreasing grid from the all-zero bound.
pub fn gen_lambda(method: Method, data: &LabeledDataset, opts: &FitOptions) -> Result<LambdaGrid> {
    opts.path.grid(lambda_max(method, data, opts)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SelectionRule {
    /// Smallest penalty among those with the lowest error.
    #[default]
    Min,
    /// Largest penalty among those with the lowest error.
    Max,
}

impl FromStr for SelectionRule {
    type Err = SpardaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "min" => Ok(Self::Min),
            "max" => Ok(Self::Max),
            _ => Err(SpardaError::InvalidArgument(format!("unknown rule '{s}', expected min or max"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: Method,
    pub lambdas: Vec<f64>,
    /// Mean validation error per penalty; `NaN` where some fold's path stopped early.
    pub mean_error: Vec<f64>,
    pub nfolds: usize,
    pub seed: u64,
    pub rule: SelectionRule,
    pub chosen_index: usize,
    pub chosen_lambda: f64,
    pub min_error: f64,
}

/// Fold index for every observation, stratified by class.
pub fn stratified_folds(labels: &[usize], n_classes: usize, nfolds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = next % nfolds;
            next += 1;
        }
    }
    folds
}

fn choose(lambdas: &[f64], errors: &[f64], rule: SelectionRule) -> Option<usize> {
    let best = errors.iter().copied().filter(|e| !e.is_nan()).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let tied = (0..lambdas.len()).filter(|&i| !errors[i].is_nan() && errors[i] <= best + 1e-12);
    match rule {
        SelectionRule::Min => tied.min_by(|&a, &b| lambdas[a].total_cmp(&lambdas[b])),
        SelectionRule::Max => tied.max_by(|&a, &b| lambdas[a].total_cmp(&lambdas[b])),
    }
}

/// k-fold cross-validation over a fixed grid (default: the automatic grid on all of `data`).
pub fn kfold_cv(
    method: Method,
    data: &LabeledDataset,
    nfolds: usize,
    grid: Option<&[f64]>,
    rule: SelectionRule,
    seed: u64,
    opts: &FitOptions,
) -> Result<CvReport> {
    if nfolds < 2 || nfolds > data.n() {
        return Err(SpardaError::InvalidArgument(format!(
            "nfolds must lie in [2, n], got {nfolds} with n = {}",
            data.n()
        )));
    }
    let lambdas = match grid {
        Some(g) => {
            crate::path::validate_lambdas(g)?;
            g.to_vec()
        }
        None => gen_lambda(method, data, opts)?.values,
    };
    let folds = stratified_folds(data.labels(), data.n_classes(), nfolds, seed);
    let per_fold: Vec<Vec<f64>> = (0..nfolds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..data.n()).filter(|&i| folds[i] != f).collect();
            let valid: Vec<usize> = (0..data.n()).filter(|&i| folds[i] == f).collect();
            let train = data.subset(&train);
            let valid = data.subset(&valid);
            if train.class_counts().contains(&0) {
                return Err(SpardaError::InvalidArgument(format!(
                    "fold {f} leaves a class without training observations"
                )));
            }
            let model = fit(method, &train, Some(&lambdas), opts)?;
            let errs = model.error_rates(&valid)?;
            Ok(lambdas
                .iter()
                .map(|l| {
                    model
                        .lambdas
                        .iter()
                        .position(|m| m == l)
                        .map_or(f64::NAN, |i| errs[i])
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mean_error: Vec<f64> = (0..lambdas.len())
        .map(|i| per_fold.iter().map(|e| e[i]).sum::<f64>() / nfolds as f64)
        .collect();
    let chosen_index = choose(&lambdas, &mean_error, rule).ok_or_else(|| {
        SpardaError::Estimation("no penalty produced a usable fit in every fold".into())
    })?;
    Ok(CvReport {
        method,
        chosen_lambda: lambdas[chosen_index],
        min_error: mean_error[chosen_index],
        lambdas,
        mean_error,
        nfolds,
        seed,
        rule,
        chosen_index,
    })
}

/// Cross-validates on `train`, refits along the same grid and reports the test error at
/// the chosen penalty.
pub fn cv_fit_test(
    method: Method,
    train: &LabeledDataset,
    test: &LabeledDataset,
    nfolds: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<(CvReport, f64)> {
    let report = kfold_cv(method, train, nfolds, None, SelectionRule::Min, seed, opts)?;
    let model = fit(method, train, Some(&report.lambdas), opts)?;
    let i = model
        .lambdas
        .iter()
        .position(|&l| l == report.chosen_lambda)
        .ok_or_else(|| SpardaError::Estimation("chosen penalty missing from the refit path".into()))?;
    let err = model.error_rates(test)?[i];
    Ok((report, err))
}

/// Direct binary method with cross-validated penalty: `(chosen λ, test error)`.
pub fn dsda_all(train: &LabeledDataset, test: &LabeledDataset, nfolds: usize, seed: u64) -> Result<(f64, f64)> {
    let (report, err) = cv_fit_test(Method::Dsda, train, test, nfolds, seed, &FitOptions::default())?;
    Ok((report.chosen_lambda, err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn separable(n: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<i64> = (0..n).map(|i| (i % 2) as i64 + 1).collect();
        let x = Array2::from_shape_fn((n, 5), |(i, j)| {
            let z: f64 = rng.sample(StandardNormal);
            if j == 0 {
                z * 0.1 + 6.0 * (i % 2) as f64
            } else {
                z
            }
        });
        LabeledDataset::vector(x, &labels).unwrap()
    }

    #[test]
    fn folds_partition_and_stratify() {
        let labels: Vec<usize> = (0..23).map(|i| usize::from(i % 3 == 0)).collect();
        let folds = stratified_folds(&labels, 2, 5, 1);
        for f in 0..5 {
            let members: Vec<usize> = (0..23).filter(|&i| folds[i] == f).collect();
            assert!(!members.is_empty());
        }
        assert_eq!(folds, stratified_folds(&labels, 2, 5, 1));
    }

    #[test]
    fn rule_picks_plateau_ends() {
        let lambdas = [0.5, 0.4, 0.3, 0.2, 0.1];
        let errors = [0.4, 0.1, 0.1, 0.1, 0.2];
        assert_eq!(choose(&lambdas, &errors, SelectionRule::Min), Some(3));
        assert_eq!(choose(&lambdas, &errors, SelectionRule::Max), Some(1));
        assert_eq!(choose(&lambdas, &[f64::NAN, 0.3, f64::NAN, 0.3, 0.5], SelectionRule::Min), Some(3));
    }

    #[test]
    fn separable_data_gets_zero_cv_error() {
        let data = separable(40, 2);
        let report = kfold_cv(Method::Dsda, &data, 5, None, SelectionRule::Min, 3, &FitOptions::default()).unwrap();
        assert_eq!(report.min_error, 0.0);
        assert!(report.lambdas.contains(&report.chosen_lambda));
        assert!(report.mean_error.iter().filter(|e| !e.is_nan()).all(|&e| (0.0..=1.0).contains(&e)));
        let again = kfold_cv(Method::Dsda, &data, 5, None, SelectionRule::Min, 3, &FitOptions::default()).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn train_equals_test_error_zero() {
        let data = separable(30, 4);
        let (_, err) = dsda_all(&data, &data, 3, 1).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn every_method_zero_at_generated_bound() {
        let data = separable(30, 5);
        let opts = FitOptions::default();
        for method in Method::ALL {
            let grid = gen_lambda(method, &data, &opts).unwrap();
            let model = fit(method, &data, Some(&grid.values[..1]), &opts).unwrap();
            assert!(model.coefficients.iter().all(|b| b.iter().all(|&v| v == 0.0)), "{method}");
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("lasso".parse::<Method>().is_err());
    }

    #[test]
    fn binary_methods_reject_three_classes() {
        let x = Array2::from_shape_fn((9, 2), |(i, j)| (i * 2 + j) as f64);
        let data = LabeledDataset::vector(x, &[1, 2, 3, 1, 2, 3, 1, 2, 3]).unwrap();
        assert!(fit(Method::Sos, &data, None, &FitOptions::default()).is_err());
        assert!(fit(Method::Msda, &data, None, &FitOptions::default()).is_ok());
    }

    #[test]
    fn model_option_only_for_msda() {
        let data = separable(20, 6);
        let opts = FitOptions {
            model_option: Some(ModelOption::MultiModified),
            ..Default::default()
        };
        assert!(fit(Method::Dsda, &data, None, &opts).is_err());
        assert!(fit(Method::Msda, &data, None, &opts).is_ok());
    }
}
