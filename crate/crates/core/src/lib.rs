//! Sparse discriminant analysis for high-dimensional vector and tensor predictors.
//!
//! Binary methods (direct sparse discriminant analysis, its ROAD and optimal-scoring
//! equivalents, and a semiparametric copula variant), a multiclass group-lasso method
//! and a tensor method with Kronecker-structured covariance, together with covariate
//! adjustment, lambda paths and cross-validation.

pub mod data;
pub mod error;
pub mod io;
pub mod binary;
pub mod catch;
pub mod covadjust;
pub mod lda;
pub mod model_select;
pub mod msda;
pub mod linalg;
pub mod path;
pub mod sesda;
pub mod sim;
pub mod solver;
pub mod tensor;

pub use ndarray;
pub use data::{ClassLabels, LabeledDataset};
pub use error::{Result, SpardaError};
pub use model_select::{fit, gen_lambda, kfold_cv, CvReport, FitOptions, FittedModel, Method, SelectionRule};
pub use io::{read_dataset, read_model, write_dataset, write_model, RawDataset, Sidecar};
pub use lda::{ClassStats, DiscriminantRule};
pub use solver::{lasso_cd, LassoProblem, SolverConfig};
pub use tensor::{DenseTensor, TensorNormalParams};
