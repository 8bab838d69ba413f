//! Dense linear algebra and special functions shared by every other module.
//!
//! Everything here operates on small dense matrices (p x p with p up to a few
//! dozen); there is deliberately no sparse or banded support.

mod finite_diff;
mod linalg;
mod moments;
mod special;

pub use finite_diff::{fd_gradient, fd_hessian};
pub use linalg::{DenseMatrix, DenseVector, SpdMatrix};
pub use moments::{sample_moments, CenteredMoments};
pub use special::{
    log_cdf_second_deriv, log_gamma, mills_ratio, std_normal_cdf, std_normal_log_cdf,
    std_normal_log_pdf, std_normal_pdf, LN_2PI,
};

use core::fmt;

/// Errors raised by the numeric kit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NumError {
    DimensionMismatch,
    NotSymmetric,
    NotPositiveDefinite,
    NotFinite,
    DomainError,
    TooFewDraws,
}

impl fmt::Display for NumError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumError::DimensionMismatch => write!(f, "dimension mismatch"),
            NumError::NotSymmetric => write!(f, "matrix is not symmetric"),
            NumError::NotPositiveDefinite => write!(f, "matrix is not positive definite"),
            NumError::NotFinite => write!(f, "non-finite entry"),
            NumError::DomainError => write!(f, "argument outside function domain"),
            NumError::TooFewDraws => write!(f, "too few draws"),
        }
    }
}

impl core::error::Error for NumError {}
