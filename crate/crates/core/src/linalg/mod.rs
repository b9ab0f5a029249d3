//! Block-sparse symmetric matrices and incrementally extensible Cholesky factors.

mod block;
mod chol;

pub use block::BlockSparseSPD;
pub use chol::{cholesky, logdet_dense, CholFactor, Extension, PD_TOLERANCE};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}
