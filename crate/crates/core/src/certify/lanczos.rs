//! Lanczos iteration with full reorthogonalization for the smallest
//! eigenvalue of a symmetric operator given only by its action.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::gaussian_vector;

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    /// Absolute Ritz residual required, scaled by `max(1, ||T||)`.
    pub tol: f64,
    /// Defaults to `min(dim, 1000)` when `None`.
    pub max_iters: Option<usize>,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iters: None, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LanczosOutcome {
    pub min_eig: f64,
    pub residual: f64,
    pub iters: usize,
}

/// Number of eigenvalues of the tridiagonal `(a, b)` strictly below `x`.
fn sturm_count(a: &[f64], b: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..a.len() {
        let off = if i == 0 { 0.0 } else { b[i - 1] * b[i - 1] };
        q = a[i] - x - if i == 0 { 0.0 } else { off / q };
        if q == 0.0 {
            q = f64::EPSILON * (a[i].abs() + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix and the last
/// component of its unit eigenvector.
fn tridiag_min(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { b[i - 1].abs() } else { 0.0 } + if i + 1 < n { b[i].abs() } else { 0.0 };
        lo = lo.min(a[i] - r);
        hi = hi.max(a[i] + r);
    }
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    while hi - lo > 4.0 * f64::EPSILON * scale {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(a, b, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    // inverse iteration with a slightly shifted theta
    let shift = theta - 1e3 * f64::EPSILON * scale;
    let mut x = vec![1.0; n];
    for _ in 0..3 {
        x = tridiag_solve(a, b, shift, &x);
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(nrm > 0.0 && nrm.is_finite()) {
            break;
        }
        x.iter_mut().for_each(|v| *v /= nrm);
    }
    (theta, x[n - 1])
}

/// Solves `(T - s I) x = rhs` by Gaussian elimination without pivoting.
fn tridiag_solve(a: &[f64], b: &[f64], s: f64, rhs: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut diag: Vec<f64> = a.iter().map(|x| x - s).collect();
    let mut y = rhs.to_vec();
    for i in 1..n {
        if diag[i - 1] == 0.0 {
            diag[i - 1] = f64::EPSILON;
        }
        let m = b[i - 1] / diag[i - 1];
        diag[i] -= m * b[i - 1];
        y[i] -= m * y[i - 1];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let d = if diag[i] == 0.0 { f64::EPSILON } else { diag[i] };
        x[i] = (y[i] - if i + 1 < n { b[i] * x[i + 1] } else { 0.0 }) / d;
    }
    x
}

fn orthogonalize(w: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(w);
            w.axpy(-c, q, 1.0);
        }
    }
}

/// Smallest eigenvalue of the symmetric map `apply` on R^dim.
///
/// On breakdown the iteration restarts from a random vector orthogonal to
/// the current basis. Failure to reach the residual tolerance is an error.
pub fn lanczos_min_eig<F>(dim: usize, mut apply: F, opts: LanczosOptions) -> Result<LanczosOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let max_iters = opts.max_iters.unwrap_or(1000).min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(max_iters);
    // current block of the (block-diagonal after restarts) tridiagonal matrix
    let mut a: Vec<f64> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    let mut finished_min = f64::INFINITY;
    let mut norm_est: f64 = 0.0;

    let mut v = gaussian_vector(&mut rng, dim);
    v /= v.norm();
    let mut last = (f64::INFINITY, f64::INFINITY);
    for iter in 1..=max_iters {
        let mut w = apply(&v)?;
        let alpha = v.dot(&w);
        basis.push(v.clone());
        orthogonalize(&mut w, &basis);
        let beta = w.norm();
        a.push(alpha);
        norm_est = norm_est.max(alpha.abs() + beta + b.last().map_or(0.0, |x: &f64| x.abs()));
        let (theta, s_last) = tridiag_min(&a, &b);
        let residual = beta * s_last.abs();
        last = (theta.min(finished_min), residual);
        let tol = opts.tol * norm_est.max(1.0);
        if iter == dim {
            return Ok(LanczosOutcome { min_eig: theta.min(finished_min), residual: 0.0, iters: iter });
        }
        if beta <= 1e-10 * norm_est.max(1.0) {
            // invariant subspace: close this block and restart elsewhere
            finished_min = finished_min.min(theta);
            a.clear();
            b.clear();
            let mut fresh = gaussian_vector(&mut rng, dim);
            orthogonalize(&mut fresh, &basis);
            let n = fresh.norm();
            if n <= 1e-10 {
                return Ok(LanczosOutcome { min_eig: finished_min, residual: 0.0, iters: iter });
            }
            v = fresh / n;
            continue;
        }
        if residual <= tol {
            return Ok(LanczosOutcome { min_eig: theta.min(finished_min), residual, iters: iter });
        }
        b.push(beta);
        v = w / beta;
    }
    Err(Error::LanczosNotConverged { iters: max_iters, residual: last.1 })
}
