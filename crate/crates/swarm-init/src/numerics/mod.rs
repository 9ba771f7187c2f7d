//! Self-contained dense linear algebra and probability primitives.
//!
//! Everything here is pure and reentrant: matrices and decompositions are
//! immutable after construction and safe to share across threads.

pub mod gamma;
pub mod mat;
pub mod rng;
pub mod sym;

pub use gamma::{chi2_cdf, chi2_quantile, gamma_p, ln_gamma};
pub use mat::{Mat, Mat2, Vec2};
pub use rng::{mvn_sample, CovFactor, StreamSeed};
pub use sym::{
    pseudo_inverse, sym_eigen, sym_expm, EigenDecomposition, SymMatrix, DEFAULT_RANK_TOL,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("matrix is not positive semidefinite (eigenvalue {0})")]
    NotPsd(f64),
    #[error("overflow in matrix exponential (exponent {0})")]
    Overflow(f64),
    #[error("probability must lie in (0, 1), got {0}")]
    InvalidProbability(f64),
}
