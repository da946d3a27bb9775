use std::sync::OnceLock;

use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::symvec::{sym_dim, sym_unvectorize, sym_vectorize};
use crate::error::{dim_err, invalid, Error, Result};
use crate::linalg::{gaussian_vector, power_iteration};
use crate::serde_mat::{from_row_major, to_row_major};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    DenseEnsemble,
    GaussianEnsemble,
    RankOnePerturbedIdentity,
}

/// Domain `d1 x d2` (or `d x d` symmetric) and number of measurements `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub d1: usize,
    pub d2: usize,
    pub n: usize,
}

/// How strongly a rank-one perturbed identity shrinks the direction `G`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Perturbation {
    /// Normal operator `E - <G,E> G`; requires `||G||_F < 1`.
    FromG,
    /// Normal operator `E - coeff <G^,E> G^` with `G^ = G/||G||_F`, `coeff` in `[0, 1)`.
    Coefficient(f64),
}

#[derive(Clone, Debug)]
enum Repr {
    /// Row `i` holds the coordinates of the measurement matrix `A_i`.
    Design {
        design: DMatrix<f64>,
        seed: Option<u64>,
        /// Symmetric ensembles only: rows `vec(A_i)` over the full `d x d` grid.
        full: OnceLock<DMatrix<f64>>,
    },
    /// `forward(E) = E - t <G^,E> G^`, with `coeff = 2t - t^2`.
    RankOne {
        g: DMatrix<f64>,
        g_hat: DVector<f64>,
        coeff: f64,
        t: f64,
    },
}

/// A linear map from `d1 x d2` matrices (or symmetric `d x d` matrices) to R^n.
///
/// Operators are immutable once built. Symmetric-domain operators act on the
/// isometric coordinates of [`super::sym_vectorize`], so every inner product
/// identity carries over unchanged.
#[derive(Clone, Debug)]
pub struct MeasurementOperator {
    kind: OperatorKind,
    shape: Shape,
    symmetric: bool,
    repr: Repr,
}

fn domain_dim(d1: usize, d2: usize, symmetric: bool) -> usize {
    if symmetric {
        sym_dim(d1)
    } else {
        d1 * d2
    }
}

impl MeasurementOperator {
    /// Gaussian ensemble with entry variance `1/n`, so that
    /// `E ||A(E)||^2 = ||E||_F^2`. Deterministic in `seed`.
    pub fn gaussian(d1: usize, d2: usize, n: usize, seed: u64, symmetric: bool) -> Result<Self> {
        check_dims(d1, d2, n, symmetric)?;
        let m = domain_dim(d1, d2, symmetric);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (n as f64).sqrt();
        let mut design = DMatrix::zeros(n, m);
        for i in 0..n {
            if symmetric {
                for c in 0..m {
                    let x: f64 = StandardNormal.sample(&mut rng);
                    design[(i, c)] = scale * x;
                }
            } else {
                // A_i drawn in row-major order
                for r in 0..d1 {
                    for c in 0..d2 {
                        let x: f64 = StandardNormal.sample(&mut rng);
                        design[(i, r + c * d1)] = scale * x;
                    }
                }
            }
        }
        Ok(Self {
            kind: OperatorKind::GaussianEnsemble,
            shape: Shape { d1, d2, n },
            symmetric,
            repr: Repr::Design { design, seed: Some(seed), full: OnceLock::new() },
        })
    }

    /// Explicit measurement matrices `A_1, ..., A_n`.
    pub fn dense(matrices: &[DMatrix<f64>], symmetric: bool) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| invalid("dense ensemble needs at least one measurement matrix"))?;
        let (d1, d2) = first.shape();
        check_dims(d1, d2, matrices.len(), symmetric)?;
        let m = domain_dim(d1, d2, symmetric);
        let mut design = DMatrix::zeros(matrices.len(), m);
        for (i, a) in matrices.iter().enumerate() {
            if a.shape() != (d1, d2) {
                return Err(dim_err(format!(
                    "measurement matrix {i} is {}x{}, expected {d1}x{d2}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            let row = if symmetric {
                sym_vectorize(a)?
            } else {
                DVector::from_column_slice(a.as_slice())
            };
            design.row_mut(i).copy_from(&row.transpose());
        }
        Ok(Self {
            kind: OperatorKind::DenseEnsemble,
            shape: Shape { d1, d2, n: matrices.len() },
            symmetric,
            repr: Repr::Design { design, seed: None, full: OnceLock::new() },
        })
    }

    /// Rank-one perturbation of the identity, stored implicitly.
    pub fn rank_one_perturbed(g: &DMatrix<f64>, perturbation: Perturbation, symmetric: bool) -> Result<Self> {
        let (d1, d2) = g.shape();
        let m = domain_dim(d1, d2, symmetric);
        check_dims(d1, d2, m.max(1), symmetric)?;
        let g_norm = g.norm();
        let coeff = match perturbation {
            Perturbation::FromG => {
                if g_norm >= 1.0 {
                    return Err(invalid(format!(
                        "||G||_F = {g_norm} must be < 1 for a positive definite quadratic form"
                    )));
                }
                g_norm * g_norm
            }
            Perturbation::Coefficient(c) => {
                if !(0.0..1.0).contains(&c) {
                    return Err(invalid(format!("perturbation coefficient {c} must lie in [0, 1)")));
                }
                c
            }
        };
        let g_coords = if symmetric {
            sym_vectorize(g)?
        } else {
            DVector::from_column_slice(g.as_slice())
        };
        let (g_hat, coeff) = if g_norm > 0.0 {
            (g_coords / g_norm, coeff)
        } else {
            (DVector::zeros(m), 0.0)
        };
        let t = 1.0 - (1.0 - coeff).sqrt();
        Ok(Self {
            kind: OperatorKind::RankOnePerturbedIdentity,
            shape: Shape { d1, d2, n: m },
            symmetric,
            repr: Repr::RankOne { g: g.clone(), g_hat, coeff, t },
        })
    }

    pub fn identity(d1: usize, d2: usize, symmetric: bool) -> Result<Self> {
        Self::rank_one_perturbed(&DMatrix::zeros(d1, d2), Perturbation::Coefficient(0.0), symmetric)
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn n(&self) -> usize {
        self.shape.n
    }

    pub fn domain_shape(&self) -> (usize, usize) {
        (self.shape.d1, self.shape.d2)
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn seed(&self) -> Option<u64> {
        match &self.repr {
            Repr::Design { seed, .. } => *seed,
            Repr::RankOne { .. } => None,
        }
    }

    /// `(G, coefficient)` for a rank-one perturbed identity.
    pub fn rank_one_parts(&self) -> Option<(&DMatrix<f64>, f64)> {
        match &self.repr {
            Repr::RankOne { g, coeff, .. } => Some((g, *coeff)),
            Repr::Design { .. } => None,
        }
    }

    /// Dimension of the (vectorized) domain.
    pub fn domain_dim(&self) -> usize {
        domain_dim(self.shape.d1, self.shape.d2, self.symmetric)
    }

    pub fn coords(&self, e: &DMatrix<f64>) -> Result<DVector<f64>> {
        if e.shape() != (self.shape.d1, self.shape.d2) {
            return Err(dim_err(format!(
                "operator domain is {}x{}, got {}x{}",
                self.shape.d1,
                self.shape.d2,
                e.nrows(),
                e.ncols()
            )));
        }
        if self.symmetric {
            sym_vectorize(e)
        } else {
            Ok(DVector::from_column_slice(e.as_slice()))
        }
    }

    pub fn from_coords(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if x.len() != self.domain_dim() {
            return Err(dim_err(format!("expected {} coordinates, got {}", self.domain_dim(), x.len())));
        }
        if self.symmetric {
            sym_unvectorize(x)
        } else {
            Ok(DMatrix::from_column_slice(self.shape.d1, self.shape.d2, x.as_slice()))
        }
    }

    pub fn forward_coords(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.repr {
            Repr::Design { design, .. } => design * x,
            Repr::RankOne { g_hat, t, .. } => {
                let ip = g_hat.dot(x);
                x - g_hat * (t * ip)
            }
        }
    }

    pub fn adjoint_coords(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.repr {
            Repr::Design { design, .. } => design.tr_mul(y),
            Repr::RankOne { g_hat, t, .. } => {
                let ip = g_hat.dot(y);
                y - g_hat * (t * ip)
            }
        }
    }

    pub fn normal_coords(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.repr {
            Repr::Design { .. } => self.adjoint_coords(&self.forward_coords(x)),
            Repr::RankOne { g_hat, coeff, .. } => {
                let ip = g_hat.dot(x);
                x - g_hat * (coeff * ip)
            }
        }
    }

    /// `A(E)`.
    pub fn forward(&self, e: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(self.forward_coords(&self.coords(e)?))
    }

    /// `A*(y)`, a `d1 x d2` matrix (symmetric for symmetric operators).
    pub fn adjoint(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        if y.len() != self.shape.n {
            return Err(dim_err(format!("expected {} measurements, got {}", self.shape.n, y.len())));
        }
        self.from_coords(&self.adjoint_coords(y))
    }

    /// `A*A(E)`.
    pub fn normal(&self, e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.from_coords(&self.normal_coords(&self.coords(e)?))
    }

    /// Power-iteration estimate of `||A*A||` (a lower estimate; exact for
    /// rank-one perturbed identities).
    pub fn normal_norm_estimate(&self, iters: usize, seed: u64) -> f64 {
        match &self.repr {
            Repr::RankOne { .. } => 1.0,
            Repr::Design { .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let start = gaussian_vector(&mut rng, self.domain_dim());
                power_iteration(self.domain_dim(), iters, start, |x| self.normal_coords(x))
            }
        }
    }

    /// Rows `vec(A_i)` in column-major `d1 x d2` layout, or `None` for
    /// rank-one perturbed identities.
    fn full_design(&self) -> Option<&DMatrix<f64>> {
        let Repr::Design { design, full, .. } = &self.repr else {
            return None;
        };
        if !self.symmetric {
            return Some(design);
        }
        Some(full.get_or_init(|| {
            let d = self.shape.d1;
            let mut out = DMatrix::zeros(self.shape.n, d * d);
            for i in 0..self.shape.n {
                let a = sym_unvectorize(&design.row(i).transpose()).expect("design rows have sym_dim entries");
                out.row_mut(i).copy_from_slice(a.as_slice());
            }
            out
        }))
    }

    /// `(Y, Z)` with rows `Y_i = vec(A_i V)` (`n x d1 r`) and
    /// `Z_i = vec(A_i^T U)` (`n x d2 r`), so that
    /// `A(dU V^T + U dV^T) = Y vec(dU) + Z vec(dV)`. `Z` is omitted when
    /// `v` is `None` (symmetric operators, where it equals `Y`).
    ///
    /// `None` unless the stacked products are at most half the size of the
    /// design, which is when they make repeated Hessian products cheaper.
    pub fn tangent_products(&self, u: &DMatrix<f64>, v: Option<&DMatrix<f64>>) -> Option<(DMatrix<f64>, Option<DMatrix<f64>>)> {
        let Shape { d1, d2, n } = self.shape;
        let r = u.ncols();
        if 2 * (d1 + d2) * r > self.domain_dim() {
            return None;
        }
        let full = self.full_design()?;
        let slab = full.as_slice();
        let right = v.unwrap_or(u);
        // the design buffer read as (n d1) x d2 has rows (i, a) and columns b
        let y = DMatrixView::from_slice(slab, n * d1, d2) * right;
        let y = y.reshape_generic(nalgebra::Dyn(n), nalgebra::Dyn(d1 * r));
        let z = v.map(|_| {
            let mut z = DMatrix::zeros(n, d2 * r);
            for b in 0..d2 {
                let block = DMatrixView::from_slice(&slab[b * n * d1..(b + 1) * n * d1], n, d1) * u;
                for j in 0..r {
                    z.column_mut(b + j * d2).copy_from(&block.column(j));
                }
            }
            z
        });
        Some((y, z))
    }

    /// Measurement matrices `A_i` (materialized; rank-one operators yield
    /// `d1*d2` of them).
    pub fn measurement_matrices(&self) -> Result<Vec<DMatrix<f64>>> {
        let m = self.domain_dim();
        (0..self.shape.n)
            .map(|i| {
                let mut y = DVector::zeros(self.shape.n);
                y[i] = 1.0;
                if let Repr::Design { design, .. } = &self.repr {
                    let row: DVector<f64> = design.row(i).transpose();
                    debug_assert_eq!(row.len(), m);
                    self.from_coords(&row)
                } else {
                    self.adjoint(&y)
                }
            })
            .collect()
    }
}

fn check_dims(d1: usize, d2: usize, n: usize, symmetric: bool) -> Result<()> {
    if d1 == 0 || d2 == 0 || n == 0 {
        return Err(invalid(format!("dimensions must be positive, got d1={d1} d2={d2} n={n}")));
    }
    if symmetric && d1 != d2 {
        return Err(dim_err(format!("symmetric domain requires d1 == d2, got {d1} != {d2}")));
    }
    Ok(())
}

/// Self-describing JSON form of an operator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperatorDoc {
    pub kind: OperatorKind,
    pub shape: Shape,
    pub symmetric: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient: Option<f64>,
    /// Row-major `G` for rank-one perturbed identities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<f64>>,
    /// Row-major measurement matrices for dense ensembles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Vec<Vec<f64>>>,
}

impl From<&MeasurementOperator> for OperatorDoc {
    fn from(op: &MeasurementOperator) -> Self {
        let mut doc = OperatorDoc {
            kind: op.kind,
            shape: op.shape,
            symmetric: op.symmetric,
            seed: None,
            coefficient: None,
            g: None,
            matrices: None,
        };
        match (&op.repr, op.kind) {
            (Repr::Design { seed, .. }, OperatorKind::GaussianEnsemble) => doc.seed = *seed,
            (Repr::Design { .. }, _) => {
                let mats = op.measurement_matrices().expect("design rows are valid coordinates");
                doc.matrices = Some(mats.iter().map(to_row_major).collect());
            }
            (Repr::RankOne { g, coeff, .. }, _) => {
                doc.coefficient = Some(*coeff);
                doc.g = Some(to_row_major(g));
            }
        }
        doc
    }
}

impl TryFrom<OperatorDoc> for MeasurementOperator {
    type Error = Error;

    fn try_from(doc: OperatorDoc) -> Result<Self> {
        let Shape { d1, d2, n } = doc.shape;
        match doc.kind {
            OperatorKind::GaussianEnsemble => {
                let seed = doc.seed.ok_or_else(|| invalid("gaussian operator document lacks a seed"))?;
                Self::gaussian(d1, d2, n, seed, doc.symmetric)
            }
            OperatorKind::DenseEnsemble => {
                let mats = doc
                    .matrices
                    .ok_or_else(|| invalid("dense operator document lacks matrices"))?
                    .iter()
                    .map(|m| from_row_major(d1, d2, m).ok_or_else(|| dim_err("measurement matrix length")))
                    .collect::<Result<Vec<_>>>()?;
                Self::dense(&mats, doc.symmetric)
            }
            OperatorKind::RankOnePerturbedIdentity => {
                let g = doc.g.ok_or_else(|| invalid("rank-one operator document lacks G"))?;
                let g = from_row_major(d1, d2, &g).ok_or_else(|| dim_err("G length"))?;
                let coeff = doc.coefficient.unwrap_or(0.0);
                Self::rank_one_perturbed(&g, Perturbation::Coefficient(coeff), doc.symmetric)
            }
        }
    }
}

impl Serialize for MeasurementOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        OperatorDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for MeasurementOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = OperatorDoc::deserialize(d)?;
        MeasurementOperator::try_from(doc).map_err(serde::de::Error::custom)
    }
}
