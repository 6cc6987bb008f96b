//! Python bindings: simulation, path fitting, cross-validation and prediction.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sparda::io::model_from_json;
use sparda::model_select::{kfold_cv, FitOptions, FittedModel, Method, SelectionRule};
use sparda::msda::ModelOption;
use sparda::ndarray::Array2;
use sparda::path::{PathOptions, Spacing};
use sparda::sesda::TransformVariant;
use sparda::sim::{sim_binary_vector, sim_tensor_cov, TensorSimSpec, VectorSimSpec};
use sparda::{LabeledDataset, SpardaError};

fn to_py(err: SpardaError) -> PyErr {
    match err {
        SpardaError::InvalidArgument(_) | SpardaError::Dimension(_) | SpardaError::Parse { .. } => {
            PyValueError::new_err(err.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Accepts nested sequences or anything with `tolist()`, such as a numpy array.
fn rows(obj: &Bound<'_, PyAny>) -> PyResult<Vec<Vec<f64>>> {
    if obj.hasattr("tolist")? {
        obj.call_method0("tolist")?.extract()
    } else {
        obj.extract()
    }
}

fn flat<T: for<'a, 'py> FromPyObject<'a, 'py>>(obj: &Bound<'_, PyAny>) -> PyResult<Vec<T>> {
    if obj.hasattr("tolist")? {
        obj.call_method0("tolist")?.extract()
    } else {
        obj.extract()
    }
}

fn matrix(obj: &Bound<'_, PyAny>, what: &str) -> PyResult<Array2<f64>> {
    let rows = rows(obj)?;
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!("{what}: rows have different lengths")));
    }
    let nrows = rows.len();
    Array2::from_shape_vec((nrows, ncols), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn dataset(
    x: &Bound<'_, PyAny>,
    y: &Bound<'_, PyAny>,
    dims: Option<Vec<usize>>,
    covariates: Option<&Bound<'_, PyAny>>,
) -> PyResult<LabeledDataset> {
    let x = matrix(x, "x")?;
    let labels: Vec<i64> = flat(y)?;
    let dims = dims.unwrap_or_else(|| vec![x.ncols()]);
    let data = LabeledDataset::new(x, dims, &labels).map_err(to_py)?;
    match covariates {
        Some(u) => data.with_covariates(matrix(u, "covariates")?).map_err(to_py),
        None => Ok(data),
    }
}

fn parse_method(name: &str) -> PyResult<Method> {
    name.parse().map_err(to_py)
}

#[allow(clippy::too_many_arguments)]
fn options(
    nlambda: usize,
    lambda_min_ratio: f64,
    log_spacing: bool,
    dfmax: Option<usize>,
    tol: Option<f64>,
    max_sweeps: Option<usize>,
    model_option: Option<&str>,
    transform: &str,
) -> PyResult<FitOptions> {
    let mut path = PathOptions {
        nlambda,
        lambda_min_ratio,
        spacing: if log_spacing { Spacing::Log } else { Spacing::Linear },
        dfmax,
        ..Default::default()
    };
    if let Some(tol) = tol {
        path.solver.tol = tol;
    }
    if let Some(sweeps) = max_sweeps {
        path.solver.max_sweeps = sweeps;
    }
    let model_option = match model_option {
        None => None,
        Some("binary") => Some(ModelOption::Binary),
        Some("original") => Some(ModelOption::MultiOriginal),
        Some("modified") => Some(ModelOption::MultiModified),
        Some(other) => {
            return Err(PyValueError::new_err(format!(
                "model_option must be binary, original or modified, got {other:?}"
            )))
        }
    };
    let transform = match transform {
        "pooled" => TransformVariant::Pooled,
        "naive" => TransformVariant::Naive,
        other => return Err(PyValueError::new_err(format!("transform must be pooled or naive, got {other:?}"))),
    };
    Ok(FitOptions {
        path,
        model_option,
        transform,
    })
}

/// A labeled sample: `x` holds one vectorized observation per row (first index fastest).
#[pyclass(name = "Dataset", module = "pysparda", frozen)]
struct PyDataset {
    inner: LabeledDataset,
}

#[pymethods]
impl PyDataset {
    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.x().to_owned())
    }

    #[getter]
    fn y(&self) -> Vec<i64> {
        self.inner.original_labels()
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims().to_vec()
    }

    #[getter]
    fn covariates(&self) -> Option<Vec<Vec<f64>>> {
        self.inner.covariates().map(|u| to_rows(&u.to_owned()))
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, dims={:?}, classes={}, covariates={})",
            self.inner.n(),
            self.inner.dims(),
            self.inner.n_classes(),
            self.inner.covariates().map_or(0, |u| u.ncols())
        )
    }
}

/// Two Gaussian classes with compound-symmetry covariance; returns `(train, test)`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (p=500, n_per_class=75, n_test=1000, rho=0.3, n_signal=10, signal=0.5, seed=123_456))]
fn simulate_vector(
    py: Python<'_>,
    p: usize,
    n_per_class: usize,
    n_test: usize,
    rho: f64,
    n_signal: usize,
    signal: f64,
    seed: u64,
) -> PyResult<(PyDataset, PyDataset)> {
    let spec = VectorSimSpec {
        p,
        n_per_class,
        n_test,
        rho,
        n_signal,
        signal,
        seed,
    };
    let (train, test) = py.detach(|| sim_binary_vector(&spec)).map_err(to_py)?;
    Ok((PyDataset { inner: train }, PyDataset { inner: test }))
}

/// Two-class tensor data with class-dependent covariates; returns `(train, test)`.
#[pyfunction]
#[pyo3(signature = (dims=vec![10, 10, 10], n_covariates=2, n_per_class=75, n_test=1000, signal=0.8, seed=123_456))]
fn simulate_tensor(
    py: Python<'_>,
    dims: Vec<usize>,
    n_covariates: usize,
    n_per_class: usize,
    n_test: usize,
    signal: f64,
    seed: u64,
) -> PyResult<(PyDataset, PyDataset)> {
    let spec = TensorSimSpec {
        dims,
        n_covariates,
        n_per_class,
        n_test,
        signal,
        seed,
        ..Default::default()
    };
    let (train, test) = py.detach(|| sim_tensor_cov(&spec)).map_err(to_py)?;
    Ok((PyDataset { inner: train }, PyDataset { inner: test }))
}

/// A fitted solution path.
#[pyclass(name = "Model", module = "pysparda", frozen)]
struct PyModel {
    inner: FittedModel,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn method(&self) -> String {
        self.inner.method.name().to_string()
    }

    #[getter]
    fn lambdas(&self) -> Vec<f64> {
        self.inner.lambdas.clone()
    }

    #[getter]
    fn df(&self) -> Vec<usize> {
        self.inner.df()
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims.clone()
    }

    #[getter]
    fn classes(&self) -> Vec<i64> {
        self.inner.classes.codes().to_vec()
    }

    #[getter]
    fn converged(&self) -> Vec<bool> {
        self.inner.converged.clone()
    }

    /// Constrained-problem penalties for ROAD fits; `None` entries mark degenerate points.
    #[getter]
    fn road_lambdas(&self) -> Option<Vec<Option<f64>>> {
        self.inner.road_lambdas.clone()
    }

    /// The `d × (K−1)` coefficient block at path position `index`.
    fn coefficients(&self, index: usize) -> PyResult<Vec<Vec<f64>>> {
        self.inner
            .coefficients
            .get(index)
            .map(to_rows)
            .ok_or_else(|| PyValueError::new_err(format!("index {index} outside a path of {}", self.inner.lambdas.len())))
    }

    /// Predicted labels, one list per path position.
    #[pyo3(signature = (x, covariates=None))]
    fn predict(&self, py: Python<'_>, x: &Bound<'_, PyAny>, covariates: Option<&Bound<'_, PyAny>>) -> PyResult<Vec<Vec<i64>>> {
        let x = matrix(x, "x")?;
        let u = covariates.map(|u| matrix(u, "covariates")).transpose()?;
        py.detach(|| self.inner.predict(x.view(), u.as_ref().map(|u| u.view())))
            .map_err(to_py)
    }

    /// Misclassification rate at every path position.
    #[pyo3(signature = (x, y, covariates=None))]
    fn error_rates(
        &self,
        py: Python<'_>,
        x: &Bound<'_, PyAny>,
        y: &Bound<'_, PyAny>,
        covariates: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<Vec<f64>> {
        let data = dataset(x, y, Some(self.inner.dims.clone()), covariates)?;
        py.detach(|| self.inner.error_rates(&data)).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        model_from_json(text).map(|inner| Self { inner }).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.lambdas.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(method={}, dims={:?}, classes={}, path_length={})",
            self.inner.method,
            self.inner.dims,
            self.inner.n_classes(),
            self.inner.lambdas.len()
        )
    }
}

/// Fits a solution path. `dims` gives the tensor shape of each row of `x` (default: vector).
#[pyfunction]
#[pyo3(signature = (
    method, x, y, dims=None, covariates=None, lambdas=None, nlambda=100, lambda_min_ratio=0.05,
    log_spacing=false, dfmax=None, tol=None, max_sweeps=None, model_option=None, transform="pooled"
))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    method: &str,
    x: &Bound<'_, PyAny>,
    y: &Bound<'_, PyAny>,
    dims: Option<Vec<usize>>,
    covariates: Option<&Bound<'_, PyAny>>,
    lambdas: Option<Vec<f64>>,
    nlambda: usize,
    lambda_min_ratio: f64,
    log_spacing: bool,
    dfmax: Option<usize>,
    tol: Option<f64>,
    max_sweeps: Option<usize>,
    model_option: Option<&str>,
    transform: &str,
) -> PyResult<PyModel> {
    let method = parse_method(method)?;
    let data = dataset(x, y, dims, covariates)?;
    let opts = options(nlambda, lambda_min_ratio, log_spacing, dfmax, tol, max_sweeps, model_option, transform)?;
    let inner = py
        .detach(|| sparda::fit(method, &data, lambdas.as_deref(), &opts))
        .map_err(to_py)?;
    Ok(PyModel { inner })
}

/// Stratified k-fold cross-validation; returns a dict with the grid, mean errors and the choice.
#[pyfunction]
#[pyo3(signature = (
    method, x, y, dims=None, covariates=None, nfolds=5, lambdas=None, rule="min", seed=1,
    nlambda=100, lambda_min_ratio=0.05, log_spacing=false, model_option=None, transform="pooled"
))]
#[allow(clippy::too_many_arguments)]
fn cross_validate<'py>(
    py: Python<'py>,
    method: &str,
    x: &Bound<'py, PyAny>,
    y: &Bound<'py, PyAny>,
    dims: Option<Vec<usize>>,
    covariates: Option<&Bound<'py, PyAny>>,
    nfolds: usize,
    lambdas: Option<Vec<f64>>,
    rule: &str,
    seed: u64,
    nlambda: usize,
    lambda_min_ratio: f64,
    log_spacing: bool,
    model_option: Option<&str>,
    transform: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let method = parse_method(method)?;
    let rule: SelectionRule = rule.parse().map_err(to_py)?;
    let data = dataset(x, y, dims, covariates)?;
    let opts = options(nlambda, lambda_min_ratio, log_spacing, None, None, None, model_option, transform)?;
    let report = py
        .detach(|| kfold_cv(method, &data, nfolds, lambdas.as_deref(), rule, seed, &opts))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("method", report.method.name())?;
    out.set_item("lambdas", report.lambdas)?;
    out.set_item("mean_error", report.mean_error)?;
    out.set_item("nfolds", report.nfolds)?;
    out.set_item("seed", report.seed)?;
    out.set_item("chosen_index", report.chosen_index)?;
    out.set_item("chosen_lambda", report.chosen_lambda)?;
    out.set_item("min_error", report.min_error)?;
    Ok(out)
}

#[pymodule]
fn pysparda(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("METHODS", Method::ALL.iter().map(|m| m.name()).collect::<Vec<_>>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(simulate_vector, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    Ok(())
}
