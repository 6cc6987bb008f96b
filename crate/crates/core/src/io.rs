//! Dataset files (CSV plus a JSON sidecar) and model files (JSON).
//!
//! A dataset CSV has a header row and one observation per row. Predictor columns hold
//! `vec(X_i)` in column-major order. The sidecar at `<file>.json` records the predictor
//! dims, the label column (or `null`) and the covariate columns, all as 0-based column
//! positions. Without a sidecar the file is read as vector data whose first column is
//! the label when its header is `label`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{ClassLabels, LabeledDataset};
use crate::error::{dim_err, Result, SpardaError};
use crate::model_select::FittedModel;

/// Column layout of a dataset CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub dims: Vec<usize>,
    pub label_col: Option<usize>,
    #[serde(default)]
    pub covariate_cols: Vec<usize>,
}

/// Dataset as stored on disk; labels are optional so unlabeled inputs can be predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub x: Array2<f64>,
    pub dims: Vec<usize>,
    pub labels: Option<Vec<i64>>,
    pub covariates: Option<Array2<f64>>,
}

impl RawDataset {
    pub fn from_labeled(data: &LabeledDataset) -> Self {
        Self {
            x: data.x().to_owned(),
            dims: data.dims().to_vec(),
            labels: Some(data.original_labels()),
            covariates: data.covariates().map(|u| u.to_owned()),
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    fn labels_or_err(&self) -> Result<&[i64]> {
        self.labels
            .as_deref()
            .ok_or_else(|| SpardaError::InvalidArgument("dataset has no label column".into()))
    }

    /// Labeled dataset with classes coded by first appearance.
    pub fn into_labeled(self) -> Result<LabeledDataset> {
        let classes = ClassLabels::from_first_appearance(self.labels_or_err()?);
        self.into_labeled_with(classes)
    }

    /// Labeled dataset using a fixed class coding.
    pub fn into_labeled_with(self, classes: ClassLabels) -> Result<LabeledDataset> {
        let labels = self.labels_or_err()?.to_vec();
        let data = LabeledDataset::with_classes(self.x, self.dims, &labels, classes)?;
        match self.covariates {
            Some(u) => data.with_covariates(u),
            None => Ok(data),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn parse_err(line: u64, column: usize, message: impl Into<String>) -> SpardaError {
    SpardaError::Parse {
        location: format!("line {line}, column {}", column + 1),
        message: message.into(),
    }
}

fn csv_err(err: csv::Error) -> SpardaError {
    let location = err.position().map(|p| format!("line {}, byte {}", p.line(), p.byte()));
    match location {
        Some(location) => SpardaError::Parse {
            location,
            message: err.to_string(),
        },
        None => SpardaError::Csv(err),
    }
}

fn parse_label(s: &str) -> Option<i64> {
    let s = s.trim();
    s.parse::<i64>().ok().or_else(|| {
        let v: f64 = s.parse().ok()?;
        (v.fract() == 0.0 && v.abs() < 9.0e15).then_some(v as i64)
    })
}

/// Reads a dataset, using its sidecar when one exists.
pub fn read_dataset(path: &Path) -> Result<RawDataset> {
    let side = sidecar_path(path);
    let sidecar: Option<Sidecar> = if side.exists() {
        Some(serde_json::from_reader(BufReader::new(File::open(&side)?)).map_err(|e| {
            SpardaError::Parse {
                location: format!("{}:{}:{}", side.display(), e.line(), e.column()),
                message: e.to_string(),
            }
        })?)
    } else {
        None
    };
    read_dataset_with(path, sidecar.as_ref())
}

/// Reads a dataset with an explicit layout (`None`: vector data, label column detected by header).
pub fn read_dataset_with(path: &Path, sidecar: Option<&Sidecar>) -> Result<RawDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    let width = header.len();
    let layout = match sidecar {
        Some(s) => s.clone(),
        None => {
            let labeled = header.get(0).is_some_and(|h| h.eq_ignore_ascii_case("label"));
            Sidecar {
                dims: vec![width - usize::from(labeled)],
                label_col: labeled.then_some(0),
                covariate_cols: Vec::new(),
            }
        }
    };
    for &c in layout.label_col.iter().chain(&layout.covariate_cols) {
        if c >= width {
            return Err(parse_err(1, c, format!("declared column {c} but the header has {width} columns")));
        }
    }
    let predictor_cols: Vec<usize> = (0..width)
        .filter(|c| Some(*c) != layout.label_col && !layout.covariate_cols.contains(c))
        .collect();
    let d: usize = layout.dims.iter().product();
    if layout.dims.is_empty() || d != predictor_cols.len() {
        return Err(parse_err(
            1,
            0,
            format!(
                "dims {:?} need {d} predictor columns, the file has {}",
                layout.dims,
                predictor_cols.len()
            ),
        ));
    }

    let q = layout.covariate_cols.len();
    let mut xs = Vec::new();
    let mut us = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let number = |c: usize| -> Result<f64> {
            let s = &record[c];
            s.parse::<f64>()
                .map_err(|_| parse_err(line, c, format!("'{s}' is not a number")))
        };
        for &c in &predictor_cols {
            xs.push(number(c)?);
        }
        for &c in &layout.covariate_cols {
            us.push(number(c)?);
        }
        if let Some(c) = layout.label_col {
            let s = &record[c];
            labels.push(parse_label(s).ok_or_else(|| parse_err(line, c, format!("'{s}' is not an integer label")))?);
        }
    }
    let n = xs.len() / d;
    Ok(RawDataset {
        x: Array2::from_shape_vec((n, d), xs).expect("row-major buffer"),
        dims: layout.dims,
        labels: layout.label_col.map(|_| labels),
        covariates: (q > 0).then(|| Array2::from_shape_vec((n, q), us).expect("row-major buffer")),
    })
}

/// Seventeen significant digits, enough to read back the identical double.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a dataset and its sidecar. Columns: `label`, `x1..xd`, `u1..uq`.
pub fn write_dataset(path: &Path, data: &RawDataset) -> Result<()> {
    let n = data.n();
    let d: usize = data.dims.iter().product();
    if data.x.ncols() != d {
        return dim_err(format!("dims {:?} need {d} columns, got {}", data.dims, data.x.ncols()));
    }
    if data.labels.as_ref().is_some_and(|l| l.len() != n) || data.covariates.as_ref().is_some_and(|u| u.nrows() != n) {
        return dim_err("labels or covariates do not match the number of rows");
    }
    let has_label = data.labels.is_some();
    let q = data.covariates.as_ref().map_or(0, |u| u.ncols());
    let offset = usize::from(has_label);

    let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header: Vec<String> = Vec::with_capacity(offset + d + q);
    if has_label {
        header.push("label".into());
    }
    header.extend((1..=d).map(|j| format!("x{j}")));
    header.extend((1..=q).map(|j| format!("u{j}")));
    writer.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..n {
        row.clear();
        if let Some(labels) = &data.labels {
            row.push(labels[i].to_string());
        }
        row.extend(data.x.row(i).iter().map(|&v| format_float(v)));
        if let Some(u) = &data.covariates {
            row.extend(u.row(i).iter().map(|&v| format_float(v)));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;

    let sidecar = Sidecar {
        dims: data.dims.clone(),
        label_col: has_label.then_some(0),
        covariate_cols: (offset + d..offset + d + q).collect(),
    };
    let mut out = BufWriter::new(File::create(sidecar_path(path))?);
    serde_json::to_writer(&mut out, &sidecar)?;
    writeln!(out)?;
    Ok(())
}

pub fn write_labeled(path: &Path, data: &LabeledDataset) -> Result<()> {
    write_dataset(path, &RawDataset::from_labeled(data))
}

/// Writes a headed numeric table; integer-valued columns can be passed through `format`.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes per-penalty predictions: one row per observation, one column per penalty.
pub fn write_predictions(path: &Path, lambdas: &[f64], predictions: &[Vec<i64>]) -> Result<()> {
    let header: Vec<String> = lambdas.iter().map(|l| format!("lambda_{}", format_float(*l))).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let n = predictions.first().map_or(0, Vec::len);
    write_table(
        path,
        &header,
        (0..n).map(|i| predictions.iter().map(|p| p[i].to_string()).collect()),
    )
}

pub fn write_model(path: &Path, model: &FittedModel) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, model)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<FittedModel> {
    let text = std::fs::read_to_string(path)?;
    model_from_json(&text).map_err(|e| match e {
        SpardaError::Parse { location, message } => SpardaError::Parse {
            location: format!("{}:{location}", path.display()),
            message,
        },
        other => other,
    })
}

/// Parses a model written by [`write_model`], checking its arrays agree with each other.
pub fn model_from_json(text: &str) -> Result<FittedModel> {
    let model: FittedModel = serde_json::from_str(text).map_err(|e| SpardaError::Parse {
        location: format!("{}:{}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let d: usize = model.dims.iter().product();
    let consistent = model.coefficients.len() == model.lambdas.len()
        && model.rules.len() == model.lambdas.len()
        && model.coefficients.iter().all(|b| b.nrows() == d);
    if !consistent {
        return Err(SpardaError::Parse {
            location: "model".into(),
            message: "model arrays disagree with its dims or penalty count".into(),
        });
    }
    Ok(model)
}

/// Matrix view helper for callers holding optional covariates.
pub fn covariate_view(data: &RawDataset) -> Option<ArrayView2<'_, f64>> {
    data.covariates.as_ref().map(|u| u.view())
}
