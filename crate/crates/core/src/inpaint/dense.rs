//! Dense reference solvers. Only meant for small grids (N <= 4096).

use nalgebra::{DMatrix, DVector};

use super::{operator_row, validate_inputs, InpaintOperator};
use crate::error::{DbiError, Result};
use crate::grid::{Mask, Raster};

pub const DENSE_CAP: usize = 4096;

fn check_cap(n: usize) -> Result<()> {
    if n > DENSE_CAP {
        return Err(DbiError::SizeCap { size: n, cap: DENSE_CAP });
    }
    Ok(())
}

/// The operator matrix `L` or `L L` as a dense matrix.
pub fn dense_operator(op: InpaintOperator, width: usize, height: usize) -> Result<DMatrix<f64>> {
    let n = width * height;
    check_cap(n)?;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for (j, v) in operator_row(op, i, width, height) {
            a[(i, j)] = v;
        }
    }
    Ok(a)
}

/// The inpainting matrix `M = C + (I - C) A`.
pub fn dense_inpainting_matrix(mask: &Mask, op: InpaintOperator) -> Result<DMatrix<f64>> {
    let (w, h) = mask.dims();
    let n = w * h;
    check_cap(n)?;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        if mask.is_set(i) {
            m[(i, i)] = 1.0;
        } else {
            for (j, v) in operator_row(op, i, w, h) {
                m[(i, j)] = v;
            }
        }
    }
    Ok(m)
}

fn solve_dense(m: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let x = m.lu().solve(&rhs).ok_or_else(|| DbiError::invalid("singular inpainting matrix"))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(DbiError::invalid("singular inpainting matrix"));
    }
    Ok(x)
}

/// `u = M^{-1} C f` by LU decomposition.
pub fn dense_oracle_inpaint(mask: &Mask, values: &Raster, op: InpaintOperator) -> Result<Raster> {
    validate_inputs(mask, values)?;
    check_cap(values.len())?;
    let m = dense_inpainting_matrix(mask, op)?;
    let rhs = DVector::from_iterator(
        values.len(),
        values.data().iter().enumerate().map(|(i, &v)| if mask.is_set(i) { v } else { 0.0 }),
    );
    let x = solve_dense(m, rhs)?;
    Raster::new(values.width(), values.height(), x.iter().copied().collect())
}

/// `x = M^{-T} rhs` by LU decomposition of the transpose.
pub fn dense_oracle_adjoint(mask: &Mask, rhs: &Raster, op: InpaintOperator) -> Result<Raster> {
    validate_inputs(mask, rhs)?;
    check_cap(rhs.len())?;
    let m = dense_inpainting_matrix(mask, op)?.transpose();
    let x = solve_dense(m, DVector::from_column_slice(rhs.data()))?;
    Raster::new(rhs.width(), rhs.height(), x.iter().copied().collect())
}
