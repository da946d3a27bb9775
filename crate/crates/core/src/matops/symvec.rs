//! Isometric coordinates for symmetric matrices.
//!
//! The upper triangle is read row by row; diagonal entries are copied and
//! off-diagonal entries are scaled by sqrt(2), so the Euclidean norm of the
//! vector equals the Frobenius norm of the matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::max_abs_asymmetry;

/// Relative asymmetry accepted before a matrix is rejected.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub fn sym_dim(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Side length `d` with `d(d+1)/2 == len`, if one exists.
pub fn sym_side(len: usize) -> Option<usize> {
    let d = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    (sym_dim(d) == len).then_some(d)
}

pub fn check_symmetric(e: &DMatrix<f64>) -> Result<()> {
    if !e.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            e.nrows(),
            e.ncols()
        )));
    }
    let scale = 1.0 + e.amax();
    let asym = max_abs_asymmetry(e);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Symmetrizes `e` (after checking it is symmetric to tolerance) and
/// returns its isometric coordinate vector of length d(d+1)/2.
pub fn sym_vectorize(e: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_symmetric(e)?;
    let d = e.nrows();
    let mut out = DVector::zeros(sym_dim(d));
    let mut idx = 0;
    for i in 0..d {
        out[idx] = e[(i, i)];
        idx += 1;
        for j in (i + 1)..d {
            out[idx] = std::f64::consts::SQRT_2 * 0.5 * (e[(i, j)] + e[(j, i)]);
            idx += 1;
        }
    }
    Ok(out)
}

pub fn sym_unvectorize(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let d = sym_side(v.len()).ok_or_else(|| {
        Error::Dimension(format!("{} is not a triangular number", v.len()))
    })?;
    let mut e = DMatrix::zeros(d, d);
    let mut idx = 0;
    for i in 0..d {
        e[(i, i)] = v[idx];
        idx += 1;
        for j in (i + 1)..d {
            let x = v[idx] * std::f64::consts::FRAC_1_SQRT_2;
            e[(i, j)] = x;
            e[(j, i)] = x;
            idx += 1;
        }
    }
    Ok(e)
}
