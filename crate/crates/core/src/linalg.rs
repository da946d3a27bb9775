//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

/// Thin SVD with singular values sorted in decreasing order.
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl SortedSvd {
    /// nalgebra's bidiagonal SVD, checked against `m`; when it returns an
    /// inaccurate factorization (it does on some rank-deficient inputs) the
    /// decomposition is rebuilt from the symmetric eigenproblem of
    /// `[[0, M], [M^T, 0]]`, whose eigenvalues are `+-sigma_i`.
    pub fn new(m: &DMatrix<f64>) -> Self {
        let k = m.nrows().min(m.ncols());
        if k == 0 {
            return Self {
                u: DMatrix::zeros(m.nrows(), 0),
                s: Vec::new(),
                v: DMatrix::zeros(m.ncols(), 0),
            };
        }
        let svd = m.clone().svd(true, true);
        let u = svd.u.expect("requested U");
        let vt = svd.v_t.expect("requested V^T");
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let s = order.iter().map(|&i| svd.singular_values[i]).collect();
        let u = DMatrix::from_fn(m.nrows(), k, |i, j| u[(i, order[j])]);
        let v = DMatrix::from_fn(m.ncols(), k, |i, j| vt[(order[j], i)]);
        let out = Self { u, s, v };
        if out.is_accurate(m) {
            out
        } else {
            Self::from_augmented_eigen(m)
        }
    }

    fn is_accurate(&self, m: &DMatrix<f64>) -> bool {
        let k = self.s.len();
        let tol = 1e-11 * (1.0 + m.norm());
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(&self.s));
        let eye = DMatrix::<f64>::identity(k, k);
        self.s.iter().all(|x| x.is_finite() && *x >= 0.0)
            && (&self.u * s * self.v.transpose() - m).norm() <= tol
            && (self.u.transpose() * &self.u - &eye).norm() <= 1e-10
            && (self.v.transpose() * &self.v - &eye).norm() <= 1e-10
    }

    fn from_augmented_eigen(m: &DMatrix<f64>) -> Self {
        let (d1, d2) = m.shape();
        let k = d1.min(d2);
        let mut aug = DMatrix::zeros(d1 + d2, d1 + d2);
        aug.view_mut((0, d1), (d1, d2)).copy_from(m);
        aug.view_mut((d1, 0), (d2, d1)).copy_from(&m.transpose());
        let eig = SymmetricEigen::new(aug);
        let mut order: Vec<usize> = (0..d1 + d2).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top = eig.eigenvalues[order[0]].max(0.0);
        let floor = 1e-13 * top.max(f64::MIN_POSITIVE);
        let pos: Vec<usize> = order.iter().copied().take(k).take_while(|&i| eig.eigenvalues[i] > floor).collect();
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut u = DMatrix::from_fn(d1, pos.len(), |i, j| sqrt2 * eig.eigenvectors[(i, pos[j])]);
        let mut v = DMatrix::from_fn(d2, pos.len(), |i, j| sqrt2 * eig.eigenvectors[(d1 + i, pos[j])]);
        // re-orthonormalize within the block and recover sigma from M v
        let mut s: Vec<f64> = Vec::with_capacity(k);
        for j in 0..pos.len() {
            let vj = v.column(j).normalize();
            let mv = m * &vj;
            let sigma = mv.norm();
            v.set_column(j, &vj);
            u.set_column(j, &(mv / sigma));
            s.push(sigma);
        }
        s.resize(k, 0.0);
        Self { u: complete_basis(&u, k), s, v: complete_basis(&v, k) }
    }
    /// Number of singular values above `rel_tol * sigma_1`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        match self.s.first() {
            Some(&s1) if s1 > 0.0 => self.s.iter().take_while(|&&x| x > rel_tol * s1).count(),
            _ => 0,
        }
    }

    pub fn leading_u(&self, k: usize) -> DMatrix<f64> {
        self.u.columns(0, k).into_owned()
    }

    pub fn leading_v(&self, k: usize) -> DMatrix<f64> {
        self.v.columns(0, k).into_owned()
    }
}

/// Decreasing singular values, from the checked [`SortedSvd`].
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    SortedSvd::new(m).s
}

/// `total` orthonormal columns whose first block spans `basis`
/// (orthonormalized by Householder QR of `[basis | I]`).
fn complete_basis(basis: &DMatrix<f64>, total: usize) -> DMatrix<f64> {
    let (n, k) = basis.shape();
    let mut aug = DMatrix::zeros(n, k + n);
    aug.view_mut((0, 0), (n, k)).copy_from(basis);
    aug.view_mut((0, k), (n, n)).fill_with_identity();
    let q = aug.qr().q();
    let mut out = q.columns(0, total).into_owned();
    for j in 0..k {
        // keep the given columns exactly, Householder may flip signs
        let col = basis.column(j).normalize();
        out.set_column(j, &col);
    }
    out
}

pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().sum()
}

/// Orthogonal projector onto the column space of `m`; columns with
/// singular value below `rel_tol * sigma_1` are treated as null.
pub fn range_projector(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = SortedSvd::new(m);
    let k = svd.rank(rel_tol);
    let q = svd.leading_u(k);
    &q * q.transpose()
}

/// Smallest eigenvalue of a symmetric matrix (symmetrized first).
pub fn sym_min_eig(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_abs_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in (j + 1)..m.nrows() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    // row-major fill so the draw order matches the serialized layout
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// `cols` orthonormal columns in R^rows from the QR factor of a Gaussian block.
pub fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    assert!(cols <= rows, "cannot fit {cols} orthonormal columns in R^{rows}");
    if cols == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let g = gaussian_matrix(rng, rows, cols);
    let q = g.qr().q();
    q.columns(0, cols).into_owned()
}

/// Orthonormal basis of the column space of `m` (thin QR, full column rank assumed).
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.ncols();
    let q = m.clone().qr().q();
    q.columns(0, k).into_owned()
}

/// Largest eigenvalue of a PSD linear map by power iteration; returns a
/// lower estimate after `iters` steps.
pub fn power_iteration<F>(dim: usize, iters: usize, start: DVector<f64>, mut apply: F) -> f64
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    if dim == 0 {
        return 0.0;
    }
    let mut x = start;
    let n0 = x.norm();
    if n0 == 0.0 {
        x = DVector::from_element(dim, 1.0 / (dim as f64).sqrt());
    } else {
        x /= n0;
    }
    let mut est = 0.0;
    for _ in 0..iters {
        let y = apply(&x);
        est = x.dot(&y);
        let ny = y.norm();
        if ny == 0.0 {
            return 0.0;
        }
        x = y / ny;
    }
    est.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sorted_svd_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = gaussian_matrix(&mut rng, 5, 3);
        let svd = SortedSvd::new(&m);
        assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        let s = DMatrix::from_diagonal(&DVector::from_vec(svd.s.clone()));
        let back = &svd.u * s * svd.v.transpose();
        assert!((back - m).norm() < 1e-12);
    }

    fn assert_valid_svd(m: &DMatrix<f64>, svd: &SortedSvd) {
        let k = m.nrows().min(m.ncols());
        assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        let s = DMatrix::from_diagonal(&DVector::from_vec(svd.s.clone()));
        assert!((&svd.u * s * svd.v.transpose() - m).norm() < 1e-12);
        let eye = DMatrix::<f64>::identity(k, k);
        assert!((svd.u.transpose() * &svd.u - &eye).norm() < 1e-12);
        assert!((svd.v.transpose() * &svd.v - &eye).norm() < 1e-12);
    }

    #[test]
    fn rank_one_input_that_breaks_bidiagonal_svd() {
        // nalgebra 0.35 returns sigma_1 = 1.045 for this unit-norm projector
        #[rustfmt::skip]
        let data = [
            0.17594401233601278, 0.17862095459081237, -0.20478179452265086, -0.09702080463369828, -0.19913511336105302, -0.14858956278008853,
            0.17862095459081237, 0.18133862582377033, -0.2078974961114293, -0.09849695086948264, -0.20216490216882704, -0.15085031421997597,
            -0.20478179452265086, -0.2078974961114293, 0.23834618076021724, 0.11292282252252347, 0.23177399062986537, 0.1729438638430688,
            -0.09702080463369828, -0.09849695086948264, 0.11292282252252347, 0.05350018114736127, 0.10980907319661912, 0.08193674083981796,
            -0.19913511336105302, -0.20216490216882704, 0.23177399062986537, 0.10980907319661912, 0.2253830229674873, 0.16817508612895138,
            -0.14858956278008853, -0.15085031421997597, 0.1729438638430688, 0.08193674083981796, 0.16817508612895138, 0.1254879769651513,
        ];
        let m = DMatrix::from_column_slice(6, 6, &data);
        let svd = SortedSvd::new(&m);
        assert_valid_svd(&m, &svd);
        assert!((svd.s[0] - 1.0).abs() < 1e-12);
        assert_eq!(svd.rank(1e-10), 1);
        assert!((op_norm(&m) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn augmented_fallback_matches_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (rows, cols, rank) in [(5, 3, 3), (4, 7, 2), (6, 6, 1), (3, 3, 0)] {
            let m = gaussian_matrix(&mut rng, rows, rank) * gaussian_matrix(&mut rng, rank, cols);
            let svd = SortedSvd::from_augmented_eigen(&m);
            assert_valid_svd(&m, &svd);
            let reference = SortedSvd::new(&m);
            for (a, b) in svd.s.iter().zip(&reference.s) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_orthonormal_has_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = random_orthonormal(&mut rng, 7, 4);
        let gram = q.transpose() * &q;
        assert!((gram - DMatrix::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn projector_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = gaussian_matrix(&mut rng, 6, 2);
        let p = range_projector(&m, 1e-12);
        assert!((&p * &p - &p).norm() < 1e-12);
        assert!((p.trace() - 2.0).abs() < 1e-12);
    }
}
