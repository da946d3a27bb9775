//! Nonconvex Burer-Monteiro matrix LASSO: objectives, local solvers,
//! second-order certificates, landscape theory and counterexample builders.

pub mod certify;
pub mod counterexamples;
pub mod error;
pub mod linalg;
pub mod matops;
pub mod objective;
pub mod serde_mat;
pub mod solver;
pub mod theory;

pub use error::{Error, Result};
