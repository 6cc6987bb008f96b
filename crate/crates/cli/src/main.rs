//! `sparda`: simulate, screen, fit, cross-validate, predict and adjust from the shell.
//!
//! Every run prints one JSON summary line on stdout; logs go to stderr. Exit status is 0
//! on success, 2 for invalid input or usage and 1 for failures during computation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use sparda::covadjust::Adjustment;
use sparda::ndarray::Axis;
use sparda::io::{self, format_float, RawDataset};
use sparda::model_select::{self, FitOptions, Method, SelectionRule};
use sparda::msda::ModelOption;
use sparda::path::{PathOptions, Spacing};
use sparda::sesda::TransformVariant;
use sparda::sim::{self, TensorSimSpec, VectorSimSpec};
use sparda::solver::SolverConfig;
use sparda::SpardaError;

#[derive(Parser, Debug)]
#[command(name = "sparda", version, about = "Sparse discriminant analysis for vector and tensor data")]
struct Cli {
    /// Worker threads for parallel sections (default: all available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Random seed for simulation and fold assignment.
    #[arg(long, global = true, env = "SPARDA_SEED")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a training and a test dataset.
    Simulate(SimulateArgs),
    /// Rank variables by their one-way ANOVA F statistic.
    Screen(ScreenArgs),
    /// Fit a solution path and write the model.
    Fit(FitArgs),
    /// Choose the penalty by k-fold cross-validation.
    Cv(CvArgs),
    /// Predict with a saved model, reporting error rates when labels are present.
    Predict(PredictArgs),
    /// Remove the within-class linear effect of the covariates from the predictors.
    Adjust(AdjustArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SimKind {
    Vector,
    Tensor,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "vector")]
    kind: SimKind,
    /// Directory receiving train.csv and test.csv with their sidecars.
    #[arg(long)]
    out_dir: PathBuf,
    /// Number of predictors (vector data).
    #[arg(long)]
    p: Option<usize>,
    /// Tensor dims, comma separated (tensor data).
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long)]
    n_per_class: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
}

#[derive(Args, Debug)]
struct ScreenArgs {
    #[arg(long)]
    input: PathBuf,
    /// Table of `variable,f,rank` (1-based variable numbers).
    #[arg(long)]
    out: PathBuf,
    /// Number of top-ranked variables to keep.
    #[arg(long)]
    top: Option<usize>,
    /// Write the input restricted to the kept variables (vector data only).
    #[arg(long, requires = "top")]
    write_data: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    Dsda,
    Road,
    Sos,
    Sesda,
    Msda,
    Catch,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Dsda => Method::Dsda,
            MethodArg::Road => Method::Road,
            MethodArg::Sos => Method::Sos,
            MethodArg::Sesda => Method::Sesda,
            MethodArg::Msda => Method::Msda,
            MethodArg::Catch => Method::Catch,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModelOptionArg {
    Binary,
    Original,
    Modified,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TransformArg {
    Naive,
    Pooled,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RuleArg {
    Min,
    Max,
}

#[derive(Args, Debug)]
struct MethodArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Multiclass back end (msda only); chosen from the dimension when absent.
    #[arg(long, value_enum)]
    model_option: Option<ModelOptionArg>,
    /// Marginal transform for sesda.
    #[arg(long, value_enum, default_value = "pooled")]
    transform: TransformArg,
}

#[derive(Args, Debug)]
struct PathArgs {
    /// Explicit decreasing penalties, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lambda: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100)]
    nlambda: usize,
    /// Smallest automatic penalty as a fraction of the upper bound.
    #[arg(long, default_value_t = 0.05)]
    lambda_min_ratio: f64,
    /// Space the automatic grid logarithmically instead of linearly.
    #[arg(long)]
    log_spacing: bool,
    /// Stop the path once more than this many variables are selected.
    #[arg(long)]
    dfmax: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    max_sweeps: usize,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
}

impl PathArgs {
    fn options(&self) -> PathOptions {
        PathOptions {
            nlambda: self.nlambda,
            lambda_min_ratio: self.lambda_min_ratio,
            spacing: if self.log_spacing { Spacing::Log } else { Spacing::Linear },
            dfmax: self.dfmax,
            solver: SolverConfig {
                max_sweeps: self.max_sweeps,
                tol: self.tol,
                ..Default::default()
            },
        }
    }
}

fn fit_options(method: &MethodArgs, path: &PathArgs) -> FitOptions {
    FitOptions {
        path: path.options(),
        model_option: method.model_option.map(|o| match o {
            ModelOptionArg::Binary => ModelOption::Binary,
            ModelOptionArg::Original => ModelOption::MultiOriginal,
            ModelOptionArg::Modified => ModelOption::MultiModified,
        }),
        transform: match method.transform {
            TransformArg::Naive => TransformVariant::Naive,
            TransformArg::Pooled => TransformVariant::Pooled,
        },
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    path: PathArgs,
    /// Model file (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Path table `lambda,df,training_error,converged`; defaults next to the model.
    #[arg(long)]
    path_table: Option<PathBuf>,
    /// Long-format table of nonzero coefficients `lambda,variable,class,value`.
    #[arg(long)]
    coef_table: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CvArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    path: PathArgs,
    #[arg(long, default_value_t = 5)]
    nfolds: usize,
    /// Among penalties tied at the lowest error, take the smallest (min) or largest (max).
    #[arg(long, value_enum, default_value = "min")]
    rule: RuleArg,
    /// Report file (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Predicted labels, one column per penalty.
    #[arg(long)]
    out: PathBuf,
    /// Error table `lambda,error` (requires labels in the input).
    #[arg(long)]
    errors: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AdjustArgs {
    #[arg(long)]
    input: PathBuf,
    /// Adjusted dataset, written without covariate columns.
    #[arg(long)]
    out: PathBuf,
    /// Fitted adjustment (JSON).
    #[arg(long)]
    adjustment: Option<PathBuf>,
}

/// Failure with the exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<SpardaError> for Failure {
    fn from(e: SpardaError) -> Self {
        let code = match e {
            SpardaError::InvalidArgument(_) | SpardaError::Dimension(_) | SpardaError::Parse { .. } => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            println!("{}", json!({"status": "error", "exit_code": 2, "message": e.kind().to_string()}));
            return ExitCode::from(2);
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("could not configure {threads} threads: {e}");
        }
    }
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            println!("{}", json!({"status": "error", "exit_code": f.code, "message": f.message}));
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> CliResult<Value> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, cli.seed),
        Command::Screen(a) => screen(a),
        Command::Fit(a) => fit(a),
        Command::Cv(a) => cv(a, cli.seed.unwrap_or(1)),
        Command::Predict(a) => predict(a),
        Command::Adjust(a) => adjust(a),
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn simulate(a: &SimulateArgs, seed: Option<u64>) -> CliResult<Value> {
    std::fs::create_dir_all(&a.out_dir).map_err(SpardaError::from)?;
    let (train, test, seed) = match a.kind {
        SimKind::Vector => {
            if a.dims.is_some() {
                return Err(invalid("--dims applies to tensor data"));
            }
            let mut spec = VectorSimSpec::default();
            spec.p = a.p.unwrap_or(spec.p);
            spec.n_per_class = a.n_per_class.unwrap_or(spec.n_per_class);
            spec.n_test = a.n_test.unwrap_or(spec.n_test);
            spec.seed = seed.unwrap_or(spec.seed);
            let (train, test) = sim::sim_binary_vector(&spec)?;
            (train, test, spec.seed)
        }
        SimKind::Tensor => {
            if a.p.is_some() {
                return Err(invalid("--p applies to vector data"));
            }
            let mut spec = TensorSimSpec::default();
            if let Some(dims) = &a.dims {
                spec.dims = dims.clone();
                spec.alpha_extent = spec.alpha_extent.min(dims.iter().copied().min().unwrap_or(0));
                spec.signal_extent = spec.signal_extent.min(dims.iter().copied().min().unwrap_or(0));
            }
            spec.n_per_class = a.n_per_class.unwrap_or(spec.n_per_class);
            spec.n_test = a.n_test.unwrap_or(spec.n_test);
            spec.seed = seed.unwrap_or(spec.seed);
            let (train, test) = sim::sim_tensor_cov(&spec)?;
            (train, test, spec.seed)
        }
    };
    let train_path = a.out_dir.join("train.csv");
    let test_path = a.out_dir.join("test.csv");
    io::write_labeled(&train_path, &train)?;
    io::write_labeled(&test_path, &test)?;
    Ok(json!({
        "status": "ok",
        "command": "simulate",
        "kind": format!("{:?}", a.kind).to_lowercase(),
        "seed": seed,
        "dims": train.dims(),
        "n_train": train.n(),
        "n_test": test.n(),
        "train": path_str(&train_path),
        "test": path_str(&test_path),
    }))
}

fn screen(a: &ScreenArgs) -> CliResult<Value> {
    let raw = io::read_dataset(&a.input)?;
    let keep_covariates = raw.covariates.clone();
    let data = raw.into_labeled()?;
    let stats = sim::f_screen(&data)?;
    let order = sim::top_indices(&stats, stats.len());
    let mut rank = vec![0; stats.len()];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r + 1;
    }
    io::write_table(
        &a.out,
        &["variable", "f", "rank"],
        (0..stats.len()).map(|j| vec![(j + 1).to_string(), format_float(stats[j]), rank[j].to_string()]),
    )?;
    let top: Vec<usize> = a.top.map(|m| order[..m.min(order.len())].to_vec()).unwrap_or_default();
    if let Some(out) = &a.write_data {
        if data.dims().len() != 1 {
            return Err(invalid("--write-data needs vector data"));
        }
        let x = data.x().select(Axis(1), &top);
        let reduced = RawDataset {
            dims: vec![top.len()],
            x,
            labels: Some(data.original_labels()),
            covariates: keep_covariates,
        };
        io::write_dataset(out, &reduced)?;
    }
    Ok(json!({
        "status": "ok",
        "command": "screen",
        "p": stats.len(),
        "top": top.iter().map(|j| j + 1).collect::<Vec<_>>(),
        "out": path_str(&a.out),
    }))
}

fn check_lambda(path: &PathArgs) -> CliResult<()> {
    if path.lambda.as_ref().is_some_and(|l| l.is_empty()) {
        return Err(invalid("--lambda needs at least one value"));
    }
    Ok(())
}

fn fit(a: &FitArgs) -> CliResult<Value> {
    check_lambda(&a.path)?;
    let data = io::read_dataset(&a.input)?.into_labeled()?;
    let method = Method::from(a.method.method);
    let opts = fit_options(&a.method, &a.path);
    let model = model_select::fit(method, &data, a.path.lambda.as_deref(), &opts)?;
    io::write_model(&a.out, &model)?;

    let errors = model.error_rates(&data)?;
    let df = model.df();
    let table = a.path_table.clone().unwrap_or_else(|| a.out.with_extension("path.csv"));
    io::write_table(
        &table,
        &["lambda", "df", "training_error", "converged"],
        (0..model.lambdas.len()).map(|i| {
            vec![
                format_float(model.lambdas[i]),
                df[i].to_string(),
                format_float(errors[i]),
                model.converged[i].to_string(),
            ]
        }),
    )?;
    if let Some(coef) = &a.coef_table {
        let classes = &model.classes;
        let rows = model.coefficients.iter().zip(&model.lambdas).flat_map(|(b, &l)| {
            b.indexed_iter()
                .filter(|(_, v)| **v != 0.0)
                .map(move |((j, k), v)| {
                    vec![format_float(l), (j + 1).to_string(), classes.code(k + 1).to_string(), format_float(*v)]
                })
                .collect::<Vec<_>>()
        });
        io::write_table(coef, &["lambda", "variable", "class", "value"], rows)?;
    }
    Ok(json!({
        "status": "ok",
        "command": "fit",
        "method": method.name(),
        "n": data.n(),
        "dims": data.dims(),
        "classes": model.classes.codes(),
        "nlambda": model.lambdas.len(),
        "lambda_max": model.lambdas.first(),
        "max_df": df.iter().max(),
        "all_converged": model.converged.iter().all(|&c| c),
        "model": path_str(&a.out),
        "path_table": path_str(&table),
    }))
}

fn cv(a: &CvArgs, seed: u64) -> CliResult<Value> {
    check_lambda(&a.path)?;
    let data = io::read_dataset(&a.input)?.into_labeled()?;
    let method = Method::from(a.method.method);
    let opts = fit_options(&a.method, &a.path);
    let rule = match a.rule {
        RuleArg::Min => SelectionRule::Min,
        RuleArg::Max => SelectionRule::Max,
    };
    let report = model_select::kfold_cv(method, &data, a.nfolds, a.path.lambda.as_deref(), rule, seed, &opts)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(&a.out).map_err(SpardaError::from)?);
    serde_json::to_writer_pretty(&mut out, &report).map_err(SpardaError::from)?;
    Ok(json!({
        "status": "ok",
        "command": "cv",
        "method": method.name(),
        "nfolds": a.nfolds,
        "seed": seed,
        "chosen_lambda": report.chosen_lambda,
        "chosen_index": report.chosen_index,
        "cv_error": report.min_error,
        "out": path_str(&a.out),
    }))
}

fn predict(a: &PredictArgs) -> CliResult<Value> {
    let model = io::read_model(&a.model)?;
    let raw = io::read_dataset(&a.input)?;
    let expected: usize = model.dims.iter().product();
    if raw.x.ncols() != expected {
        return Err(invalid(format!(
            "model expects {expected} predictor entries, input has {}",
            raw.x.ncols()
        )));
    }
    let preds = model.predict(raw.x.view(), io::covariate_view(&raw))?;
    io::write_predictions(&a.out, &model.lambdas, &preds)?;
    let mut summary = json!({
        "status": "ok",
        "command": "predict",
        "method": model.method.name(),
        "n": raw.n(),
        "nlambda": model.lambdas.len(),
        "out": path_str(&a.out),
    });
    match (&raw.labels, &a.errors) {
        (Some(truth), _) => {
            let errors: Vec<f64> = preds
                .iter()
                .map(|p| p.iter().zip(truth).filter(|(a, b)| a != b).count() as f64 / truth.len().max(1) as f64)
                .collect();
            let best = (0..errors.len()).min_by(|&i, &j| errors[i].total_cmp(&errors[j]));
            if let Some(path) = &a.errors {
                io::write_table(
                    path,
                    &["lambda", "error"],
                    errors.iter().zip(&model.lambdas).map(|(e, l)| vec![format_float(*l), format_float(*e)]),
                )?;
            }
            if let Some(i) = best {
                summary["min_error"] = json!(errors[i]);
                summary["min_error_lambda"] = json!(model.lambdas[i]);
            }
        }
        (None, Some(_)) => return Err(invalid("--errors needs a label column in the input")),
        (None, None) => {}
    }
    Ok(summary)
}

fn adjust(a: &AdjustArgs) -> CliResult<Value> {
    if a.adjustment.as_ref().is_some_and(|p| *p == io::sidecar_path(&a.out)) {
        return Err(invalid("--adjustment would overwrite the layout file of --out"));
    }
    let data = io::read_dataset(&a.input)?.into_labeled()?;
    let adj = Adjustment::fit(&data)?;
    let adjusted = adj.adjust_dataset(&data)?.without_covariates();
    io::write_labeled(&a.out, &adjusted)?;
    if let Some(path) = &a.adjustment {
        let out = std::fs::File::create(path).map_err(SpardaError::from)?;
        serde_json::to_writer(std::io::BufWriter::new(out), &adj).map_err(SpardaError::from)?;
    }
    Ok(json!({
        "status": "ok",
        "command": "adjust",
        "n": data.n(),
        "n_covariates": adj.n_covariates(),
        "out": path_str(&a.out),
    }))
}
