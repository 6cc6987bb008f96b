//! Dense M-way tensors stored in column-major (mode-1 fastest) order, so the flat
//! buffer is exactly `vec(A)`.
//!
//! Modes are addressed 0-based in this API: mode `0` is the first mode.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, SpardaError};
use crate::linalg::cholesky_lower;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return dim_err(format!("tensor dims must be non-empty and positive, got {dims:?}"));
        }
        let len: usize = dims.iter().product();
        if data.len() != len {
            return dim_err(format!(
                "tensor with dims {dims:?} needs {len} entries, got {}",
                data.len()
            ));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(dims);
        let mut idx = vec![0usize; dims.len()];
        for value in t.data.iter_mut() {
            *value = f(&idx);
            advance(&mut idx, dims);
        }
        t
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `vec(A)` as a slice.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Flat offset of a multi-index (0-based): `i_0 + p_0 i_1 + p_0 p_1 i_2 + ...`.
    pub fn offset(&self, index: &[usize]) -> usize {
        linear_index(&self.dims, index)
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return dim_err(format!(
                "mode {mode} out of range for a {}-way tensor",
                self.order()
            ));
        }
        Ok(())
    }
}

pub(crate) fn linear_index(dims: &[usize], index: &[usize]) -> usize {
    let mut off = 0;
    let mut stride = 1;
    for (&i, &p) in index.iter().zip(dims) {
        off += i * stride;
        stride *= p;
    }
    off
}

/// Increments a column-major multi-index in place.
pub(crate) fn advance(idx: &mut [usize], dims: &[usize]) {
    for (i, &p) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < p {
            return;
        }
        *i = 0;
    }
}

/// Splits dims around `mode` into (product before, size, product after).
fn split_dims(dims: &[usize], mode: usize) -> (usize, usize, usize) {
    let left = dims[..mode].iter().product();
    let right = dims[mode + 1..].iter().product();
    (left, dims[mode], right)
}

/// Mode-`mode` unfolding: a `p_mode × ∏_{l≠mode} p_l` matrix whose columns are the
/// mode fibers, ordered with the remaining indices in column-major order.
pub fn unfold(t: &DenseTensor, mode: usize) -> Result<Array2<f64>> {
    t.check_mode(mode)?;
    let (left, p, right) = split_dims(&t.dims, mode);
    let mut out = Array2::zeros((p, left * right));
    for b in 0..right {
        for c in 0..p {
            let base = left * (c + p * b);
            for a in 0..left {
                out[[c, a + left * b]] = t.data[base + a];
            }
        }
    }
    Ok(out)
}

/// Inverse of [`unfold`].
pub fn refold(m: ArrayView2<f64>, mode: usize, dims: &[usize]) -> Result<DenseTensor> {
    if mode >= dims.len() {
        return dim_err(format!("mode {mode} out of range for dims {dims:?}"));
    }
    let (left, p, right) = split_dims(dims, mode);
    if m.dim() != (p, left * right) {
        return dim_err(format!(
            "matrix {:?} cannot be refolded along mode {mode} into {dims:?}",
            m.dim()
        ));
    }
    let mut data = vec![0.0; left * p * right];
    for b in 0..right {
        for c in 0..p {
            let base = left * (c + p * b);
            for a in 0..left {
                data[base + a] = m[[c, a + left * b]];
            }
        }
    }
    DenseTensor::new(dims.to_vec(), data)
}

/// Mode product `t ×_mode g` for `g` of shape `d × p_mode`; the result has `d` in
/// place of `p_mode`.
pub fn mode_product(t: &DenseTensor, mode: usize, g: ArrayView2<f64>) -> Result<DenseTensor> {
    t.check_mode(mode)?;
    let (left, p, right) = split_dims(&t.dims, mode);
    if g.ncols() != p {
        return dim_err(format!(
            "mode-{mode} product needs a matrix with {p} columns, got {}",
            g.ncols()
        ));
    }
    let d = g.nrows();
    let mut dims = t.dims.clone();
    dims[mode] = d;
    let mut data = vec![0.0; left * d * right];
    for b in 0..right {
        for c in 0..p {
            let src = &t.data[left * (c + p * b)..left * (c + p * b) + left];
            for r in 0..d {
                let w = g[[r, c]];
                if w == 0.0 {
                    continue;
                }
                let dst = &mut data[left * (r + d * b)..left * (r + d * b) + left];
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
    }
    Ok(DenseTensor { dims, data })
}

/// Mode vector product `t ×̄_mode v`; the contracted mode is dropped from the result
/// (a one-way tensor contracts to dims `[1]`).
pub fn mode_vector_product(t: &DenseTensor, mode: usize, v: &[f64]) -> Result<DenseTensor> {
    let g = ArrayView2::from_shape((1, v.len()), v)
        .map_err(|e| SpardaError::Dimension(e.to_string()))?;
    let prod = mode_product(t, mode, g)?;
    let mut dims = prod.dims;
    dims.remove(mode);
    if dims.is_empty() {
        dims.push(1);
    }
    Ok(DenseTensor {
        dims,
        data: prod.data,
    })
}

/// Tucker transform `⟦c; g_0, ..., g_{M-1}⟧ = c ×_0 g_0 ×_1 ... ×_{M-1} g_{M-1}`.
pub fn tucker_transform<M>(c: &DenseTensor, gs: &[M]) -> Result<DenseTensor>
where
    M: AsMatrixView,
{
    if gs.len() != c.order() {
        return dim_err(format!(
            "tucker transform of a {}-way tensor needs {} matrices, got {}",
            c.order(),
            c.order(),
            gs.len()
        ));
    }
    let mut out = c.clone();
    for (mode, g) in gs.iter().enumerate() {
        out = mode_product(&out, mode, g.matrix_view())?;
    }
    Ok(out)
}

/// Lets [`tucker_transform`] accept owned arrays or views.
pub trait AsMatrixView {
    fn matrix_view(&self) -> ArrayView2<'_, f64>;
}

impl AsMatrixView for Array2<f64> {
    fn matrix_view(&self) -> ArrayView2<'_, f64> {
        self.view()
    }
}

impl AsMatrixView for ArrayView2<'_, f64> {
    fn matrix_view(&self) -> ArrayView2<'_, f64> {
        self.reborrow()
    }
}

/// `⟨a, b⟩ = Σ a_j b_j` over all entries.
pub fn inner(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    if a.dims != b.dims {
        return dim_err(format!(
            "inner product of tensors with dims {:?} and {:?}",
            a.dims, b.dims
        ));
    }
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// Parameters of the tensor normal `TN(mean; Σ_0, ..., Σ_{M-1})`, with the lower
/// Cholesky factors of each mode covariance precomputed.
#[derive(Debug, Clone)]
pub struct TensorNormalParams {
    mean: DenseTensor,
    mode_covs: Vec<Array2<f64>>,
    factors: Vec<Array2<f64>>,
}

impl TensorNormalParams {
    pub fn new(mean: DenseTensor, mode_covs: Vec<Array2<f64>>) -> Result<Self> {
        if mode_covs.len() != mean.order() {
            return dim_err(format!(
                "{}-way mean needs {} mode covariances, got {}",
                mean.order(),
                mean.order(),
                mode_covs.len()
            ));
        }
        let mut factors = Vec::with_capacity(mode_covs.len());
        for (m, cov) in mode_covs.iter().enumerate() {
            let p = mean.dims()[m];
            if cov.dim() != (p, p) {
                return dim_err(format!(
                    "mode {m} covariance must be {p}x{p}, got {:?}",
                    cov.dim()
                ));
            }
            for i in 0..p {
                for j in 0..i {
                    if (cov[[i, j]] - cov[[j, i]]).abs() > 1e-12 * (1.0 + cov[[i, j]].abs()) {
                        return Err(SpardaError::Factorization(format!(
                            "mode {m} covariance is not symmetric"
                        )));
                    }
                }
            }
            factors.push(cholesky_lower(cov.view())?);
        }
        Ok(Self {
            mean,
            mode_covs,
            factors,
        })
    }

    pub fn mean(&self) -> &DenseTensor {
        &self.mean
    }

    pub fn mode_covs(&self) -> &[Array2<f64>] {
        &self.mode_covs
    }

    /// Lower Cholesky factors `L_m` with `L_m L_mᵀ = Σ_m`.
    pub fn factors(&self) -> &[Array2<f64>] {
        &self.factors
    }
}

/// Draws `mean + ⟦Z; L_0, ..., L_{M-1}⟧` with `Z` i.i.d. standard normal.
pub fn sample_tensor_normal<R: Rng + ?Sized>(params: &TensorNormalParams, rng: &mut R) -> DenseTensor {
    let dims = params.mean.dims();
    let z = DenseTensor {
        dims: dims.to_vec(),
        data: (0..params.mean.len())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect(),
    };
    let mut out = tucker_transform(&z, &params.factors).expect("factor shapes validated at construction");
    for (o, m) in out.data.iter_mut().zip(&params.mean.data) {
        *o += m;
    }
    out
}
