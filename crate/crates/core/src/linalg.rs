//! Small dense linear-algebra helpers bridging `ndarray` to `nalgebra`'s factorizations.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Result, SpardaError};

fn to_nalgebra(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_nalgebra(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Lower Cholesky factor `L` with `L Lᵀ = a`.
pub fn cholesky_lower(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.nrows() != a.ncols() {
        return Err(SpardaError::Dimension(format!(
            "cholesky needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let chol = to_nalgebra(a)
        .cholesky()
        .ok_or_else(|| SpardaError::Factorization(format!("{}x{} matrix", a.nrows(), a.ncols())))?;
    Ok(from_nalgebra(&chol.l()))
}

/// Cholesky-backed solver for a symmetric positive-definite system, factored once.
pub struct SpdSolver {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl SpdSolver {
    pub fn new(a: ArrayView2<f64>) -> Option<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return None;
        }
        let m = to_nalgebra(a);
        // Cholesky succeeds on nearly singular matrices; reject them by conditioning of the pivots.
        let scale = (0..a.nrows()).map(|i| a[[i, i]].abs()).fold(0.0, f64::max);
        let chol = m.cholesky()?;
        let l = chol.l();
        let min_pivot = (0..a.nrows()).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
        if scale.is_nan() || scale <= 0.0 || min_pivot * min_pivot <= scale * 1e-12 {
            return None;
        }
        Some(Self { chol })
    }

    pub fn solve_vec(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let rhs = nalgebra::DVector::from_iterator(b.len(), b.iter().copied());
        let x = self.chol.solve(&rhs);
        Array1::from_iter(x.iter().copied())
    }

    /// Solves for every column of `b` at once.
    pub fn solve_mat(&self, b: ArrayView2<f64>) -> Array2<f64> {
        from_nalgebra(&self.chol.solve(&to_nalgebra(b)))
    }

    pub fn inverse(&self) -> Array2<f64> {
        from_nalgebra(&self.chol.inverse())
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    Array2::from_shape_fn((ra * rb, ca * cb), |(i, j)| {
        a[[i / rb, j / cb]] * b[[i % rb, j % cb]]
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
