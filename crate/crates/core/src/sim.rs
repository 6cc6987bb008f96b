//! Synthetic benchmark datasets and F-statistic screening.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ClassLabels, LabeledDataset};
use crate::error::{dim_err, Result, SpardaError};
use crate::linalg::cholesky_lower;
use crate::tensor::{tucker_transform, DenseTensor};

/// Two Gaussian classes sharing a compound-symmetry covariance `Σ`, with means `0` and
/// `Σβ` where `β` has `n_signal` leading entries equal to `signal`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorSimSpec {
    pub p: usize,
    pub n_per_class: usize,
    pub n_test: usize,
    pub rho: f64,
    pub n_signal: usize,
    pub signal: f64,
    pub seed: u64,
}

impl Default for VectorSimSpec {
    fn default() -> Self {
        Self {
            p: 500,
            n_per_class: 75,
            n_test: 1000,
            rho: 0.3,
            n_signal: 10,
            signal: 0.5,
            seed: 123_456,
        }
    }
}

impl VectorSimSpec {
    pub fn covariance(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.p, self.p), |(i, j)| if i == j { 1.0 } else { self.rho })
    }

    pub fn direction(&self) -> Vec<f64> {
        (0..self.p)
            .map(|j| if j < self.n_signal { self.signal } else { 0.0 })
            .collect()
    }

    /// Misclassification rate of the true rule under equal priors: `Φ(−½√(βᵀΣβ))`.
    pub fn bayes_error(&self) -> f64 {
        use statrs::distribution::{ContinuousCDF, Normal};
        let beta = ndarray::Array1::from(self.direction());
        let delta = beta.dot(&self.covariance().dot(&beta)).sqrt();
        Normal::new(0.0, 1.0).expect("valid").cdf(-delta / 2.0)
    }
}

fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Test labels `⌈2U⌉` for uniform `U`, as codes 1 and 2.
fn uniform_binary_labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<i64> {
    (0..n)
        .map(|_| ((rng.random::<f64>() * 2.0).ceil() as i64).max(1))
        .collect()
}

/// Training set (`n_per_class` of each class, class 1 first) and test set.
pub fn sim_binary_vector(spec: &VectorSimSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    if spec.p == 0 || spec.n_per_class == 0 || spec.n_signal > spec.p {
        return Err(SpardaError::InvalidArgument(format!("invalid simulation spec {spec:?}")));
    }
    let sigma = spec.covariance();
    let chol = cholesky_lower(sigma.view())?;
    let mu2 = sigma.dot(&ndarray::Array1::from(spec.direction()));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let classes = ClassLabels::from_codes(vec![1, 2]);

    let draw = |labels: &[i64], rng: &mut ChaCha8Rng| -> Result<LabeledDataset> {
        let z = standard_normal_matrix(spec.p, labels.len(), rng);
        let mut x = chol.dot(&z).reversed_axes().as_standard_layout().into_owned();
        for (mut row, &l) in x.axis_iter_mut(Axis(0)).zip(labels) {
            if l == 2 {
                row += &mu2;
            }
        }
        LabeledDataset::with_classes(x, vec![spec.p], labels, classes.clone())
    };

    let train_labels: Vec<i64> = (0..2 * spec.n_per_class)
        .map(|i| if i < spec.n_per_class { 1 } else { 2 })
        .collect();
    let test_labels = uniform_binary_labels(spec.n_test, &mut rng);
    let train = draw(&train_labels, &mut rng)?;
    let test = draw(&test_labels, &mut rng)?;
    Ok((train, test))
}

/// Elementwise `exp` of the predictors, which breaks within-class normality.
pub fn exp_transform(data: &LabeledDataset) -> Result<LabeledDataset> {
    data.with_predictors(data.x().mapv(f64::exp))
}

/// Binary tensor-normal classes with covariates.
///
/// `U | Y = k ~ N(φ_k, I)` with `φ_2 = covariate_shift·1`, and
/// `X = M_Y + ⟦E + α ×̄ U; L_1, …, L_M⟧` with `E` standard normal, `L_m L_mᵀ = Σ_m`,
/// `M_1 = 0`, `M_2 = ⟦B; Σ_1, …, Σ_M⟧`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSimSpec {
    pub dims: Vec<usize>,
    pub n_covariates: usize,
    pub n_per_class: usize,
    pub n_test: usize,
    /// Per-mode covariances; identity when absent.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mode_covs: Option<Vec<Array2<f64>>>,
    /// Value of the coefficient tensor on its leading block.
    pub signal: f64,
    /// Side length of the leading block carrying the signal.
    pub signal_extent: usize,
    pub covariate_shift: f64,
    /// Effect of the first covariate on the leading block of side `alpha_extent`.
    pub alpha: f64,
    pub alpha_extent: usize,
    pub seed: u64,
}

impl Default for TensorSimSpec {
    fn default() -> Self {
        Self {
            dims: vec![10, 10, 10],
            n_covariates: 2,
            n_per_class: 75,
            n_test: 1000,
            mode_covs: None,
            signal: 0.8,
            signal_extent: 2,
            covariate_shift: 0.3,
            alpha: 1.0,
            alpha_extent: 5,
            seed: 123_456,
        }
    }
}

impl TensorSimSpec {
    fn block(&self, extent: usize, value: f64) -> DenseTensor {
        DenseTensor::from_fn(&self.dims, |idx| {
            if idx.iter().all(|&i| i < extent) {
                value
            } else {
                0.0
            }
        })
    }

    pub fn coefficient(&self) -> DenseTensor {
        self.block(self.signal_extent, self.signal)
    }

    pub fn mode_covariances(&self) -> Vec<Array2<f64>> {
        self.mode_covs
            .clone()
            .unwrap_or_else(|| self.dims.iter().map(|&p| Array2::eye(p)).collect())
    }
}

/// Training and test sets with covariates attached.
pub fn sim_tensor_cov(spec: &TensorSimSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    if spec.dims.is_empty() || spec.dims.contains(&0) || spec.n_per_class == 0 || spec.n_covariates == 0 {
        return Err(SpardaError::InvalidArgument(format!("invalid simulation spec {spec:?}")));
    }
    let covs = spec.mode_covariances();
    if covs.len() != spec.dims.len() {
        return dim_err(format!("{} mode covariances for {} modes", covs.len(), spec.dims.len()));
    }
    let factors = covs
        .iter()
        .map(|c| cholesky_lower(c.view()))
        .collect::<Result<Vec<_>>>()?;
    let mean2 = tucker_transform(&spec.coefficient(), &covs)?;
    let alpha = spec.block(spec.alpha_extent, spec.alpha);
    let d: usize = spec.dims.iter().product();
    let q = spec.n_covariates;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let classes = ClassLabels::from_codes(vec![1, 2]);

    let train_labels: Vec<i64> = (0..2 * spec.n_per_class)
        .map(|i| if i < spec.n_per_class { 1 } else { 2 })
        .collect();
    let test_labels = uniform_binary_labels(spec.n_test, &mut rng);

    let covariates = |labels: &[i64], rng: &mut ChaCha8Rng| {
        let mut u = standard_normal_matrix(labels.len(), q, rng);
        for (mut row, &l) in u.axis_iter_mut(Axis(0)).zip(labels) {
            if l == 2 {
                row += spec.covariate_shift;
            }
        }
        u
    };
    let train_u = covariates(&train_labels, &mut rng);
    let test_u = covariates(&test_labels, &mut rng);

    let tensors = |labels: &[i64], u: &Array2<f64>, rng: &mut ChaCha8Rng| -> Result<LabeledDataset> {
        let mut x = Array2::zeros((labels.len(), d));
        for (i, &l) in labels.iter().enumerate() {
            let mut core: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            // only the first covariate loads on the predictors
            let u0 = u[[i, 0]];
            for (c, &a) in core.iter_mut().zip(alpha.as_slice()) {
                *c += a * u0;
            }
            let core = DenseTensor::new(spec.dims.clone(), core)?;
            let mut xi = tucker_transform(&core, &factors)?;
            if l == 2 {
                for (v, &m) in xi.as_mut_slice().iter_mut().zip(mean2.as_slice()) {
                    *v += m;
                }
            }
            x.row_mut(i).iter_mut().zip(xi.as_slice()).for_each(|(o, &v)| *o = v);
        }
        LabeledDataset::with_classes(x, spec.dims.clone(), labels, classes.clone())
    };
    let train = tensors(&train_labels, &train_u, &mut rng)?.with_covariates(train_u)?;
    let test = tensors(&test_labels, &test_u, &mut rng)?.with_covariates(test_u)?;
    Ok((train, test))
}

/// One-way ANOVA F statistic per variable; zero within-class variance yields `+∞`.
pub fn f_screen(data: &LabeledDataset) -> Result<Vec<f64>> {
    let k = data.n_classes();
    let n = data.n();
    if k < 2 || n <= k {
        return Err(SpardaError::InvalidArgument(format!(
            "screening needs K ≥ 2 and n > K (n = {n}, K = {k})"
        )));
    }
    let counts = data.class_counts();
    let labels = data.labels();
    let x = data.x();
    let stats = (0..data.dim())
        .map(|j| {
            let col = x.column(j);
            let mut sums = vec![0.0; k];
            for (&v, &l) in col.iter().zip(labels) {
                sums[l] += v;
            }
            let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
            let grand = col.sum() / n as f64;
            let between: f64 = means
                .iter()
                .zip(&counts)
                .map(|(m, &c)| c as f64 * (m - grand).powi(2))
                .sum::<f64>()
                / (k - 1) as f64;
            let within: f64 = col
                .iter()
                .zip(labels)
                .map(|(&v, &l)| (v - means[l]).powi(2))
                .sum::<f64>()
                / (n - k) as f64;
            if within > 0.0 {
                between / within
            } else {
                f64::INFINITY
            }
        })
        .collect();
    Ok(stats)
}

/// Indices of the `m` largest statistics, largest first (ties by index).
pub fn top_indices(stats: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..stats.len()).collect();
    idx.sort_by(|&a, &b| stats[b].total_cmp(&stats[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lda::estimate_stats;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn small_vec_spec(seed: u64) -> VectorSimSpec {
        VectorSimSpec {
            p: 40,
            n_test: 200,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn vector_shapes_and_labels() {
        let (train, test) = sim_binary_vector(&VectorSimSpec::default()).unwrap();
        assert_eq!(train.x().dim(), (150, 500));
        assert_eq!(test.x().dim(), (1000, 500));
        assert!(test.original_labels().iter().all(|&l| l == 1 || l == 2));
        assert_eq!(train.classes(), test.classes());
    }

    #[test]
    fn vector_class_one_centered() {
        let (train, _) = sim_binary_vector(&small_vec_spec(1)).unwrap();
        let stats = estimate_stats(&train, false).unwrap();
        assert!(stats.mean(0).iter().all(|m| m.abs() < 4.0 / 75f64.sqrt()));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = sim_binary_vector(&small_vec_spec(3)).unwrap();
        let b = sim_binary_vector(&small_vec_spec(3)).unwrap();
        let c = sim_binary_vector(&small_vec_spec(4)).unwrap();
        assert_eq!(a.0.x(), b.0.x());
        assert_eq!(a.1.original_labels(), b.1.original_labels());
        assert_ne!(a.0.x(), c.0.x());
    }

    #[test]
    fn oracle_rule_attains_bayes_error() {
        let spec = VectorSimSpec {
            n_test: 4000,
            seed: 11,
            ..Default::default()
        };
        let (_, test) = sim_binary_vector(&spec).unwrap();
        let beta = ndarray::Array1::from(spec.direction());
        let mu2 = spec.covariance().dot(&beta);
        let cut = beta.dot(&mu2) / 2.0;
        let wrong = (0..test.n())
            .filter(|&i| usize::from(test.row(i).dot(&beta) > cut) != test.labels()[i])
            .count();
        let rate = wrong as f64 / test.n() as f64;
        assert!((spec.bayes_error() - 0.0642).abs() < 1e-3);
        assert!((rate - spec.bayes_error()).abs() < 0.03, "{rate}");
    }

    #[test]
    fn tensor_shapes() {
        let spec = TensorSimSpec {
            n_test: 50,
            ..Default::default()
        };
        let (train, test) = sim_tensor_cov(&spec).unwrap();
        assert_eq!(train.dims(), &[10, 10, 10]);
        assert_eq!(train.n(), 150);
        assert_eq!(train.covariates().unwrap().dim(), (150, 2));
        assert_eq!(test.n(), 50);
        assert_eq!(test.covariates().unwrap().dim(), (50, 2));
    }

    #[test]
    fn tensor_entry_variance_near_one() {
        // alpha zeroed so the entry is pure noise
        let spec = TensorSimSpec {
            dims: vec![3, 3, 3],
            n_per_class: 400,
            n_test: 1,
            alpha: 0.0,
            seed: 5,
            ..Default::default()
        };
        let (train, _) = sim_tensor_cov(&spec).unwrap();
        let stats = estimate_stats(&train, true).unwrap();
        assert!((stats.pooled_cov.unwrap()[[0, 0]] - 1.0).abs() < 0.2);
    }

    #[test]
    fn f_statistic_by_hand() {
        let data = LabeledDataset::vector(array![[1.0], [2.0], [5.0], [6.0]], &[1, 1, 2, 2]).unwrap();
        // grand mean 3.5, class means 1.5 and 5.5: between = 2·4 + 2·4 = 16 over 1;
        // within = 4·0.25 = 1 over 2 → f = 16 / 0.5 = 32
        let f = f_screen(&data).unwrap();
        assert_abs_diff_eq!(f[0], 32.0, epsilon = 1e-12);
        let scaled = data.with_predictors(data.x().mapv(|v| v * 7.0)).unwrap();
        assert_abs_diff_eq!(f_screen(&scaled).unwrap()[0], 32.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_within_class_ranks_first() {
        let data = LabeledDataset::vector(
            array![[1.0, 0.3], [1.0, 0.1], [2.0, 0.9], [2.0, 0.2]],
            &[1, 1, 2, 2],
        )
        .unwrap();
        let f = f_screen(&data).unwrap();
        assert!(f[0].is_infinite());
        assert_eq!(top_indices(&f, 1), vec![0]);
    }

    #[test]
    fn null_f_statistics_have_unit_scale() {
        let (train, _) = sim_binary_vector(&VectorSimSpec {
            n_signal: 0,
            n_test: 1,
            seed: 9,
            ..Default::default()
        })
        .unwrap();
        let mut f = f_screen(&train).unwrap();
        f.sort_by(f64::total_cmp);
        let median = f[f.len() / 2];
        // median of F(1, 148) is about 0.46
        assert!(median > 0.3 && median < 0.65, "{median}");
        assert!(f.iter().all(|&v| v >= 0.0));
    }
}
