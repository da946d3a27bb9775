//! Measurement operators, isometric symmetric coordinates and restricted
//! strong convexity / smoothness constants.

mod constants;
mod operator;
mod symvec;

pub use constants::{restricted_constants_estimate, restricted_constants_exact, RestrictedConstants};
pub use operator::{MeasurementOperator, OperatorDoc, OperatorKind, Perturbation, Shape};
pub use symvec::{check_symmetric, sym_dim, sym_side, sym_unvectorize, sym_vectorize, SYMMETRY_TOL};
