//! Scalar activations, dense matrix primitives, and the finite-difference
//! gradient oracle the analytic backward passes are checked against.

pub mod activation;
pub mod fdiff;
pub mod flops;
pub mod matrix;

pub use activation::{activation, activation_prime, ActivationKind};
pub use fdiff::finite_diff_grad;
pub use matrix::Matrix;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("data length {len} does not match {rows}x{cols}")]
    BadLength { len: usize, rows: usize, cols: usize },
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
}
