//! Truncated multivariate polynomial algebra.
//!
//! All polynomials share one monomial order (graded lexicographic, see
//! [`MonomialBasis`]) and are stored densely, one coefficient vector per
//! homogeneous degree.

mod basis;
mod bundle;
mod expr;
mod homogeneous;
mod jet;

pub use basis::{basis_len, binomial, rank, MonomialBasis};
pub use bundle::{PolyBundle, Substitution, TaylorMap};
pub use expr::{jet_lift, jet_lift_many, Expr, Scalar};
pub use homogeneous::HomogeneousPoly;
pub use jet::Jet;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("a polynomial needs at least one variable")]
    ZeroVariables,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("degree range {lo}..={hi} is not contiguous with {other_lo}..={other_hi}")]
    NonContiguous {
        lo: usize,
        hi: usize,
        other_lo: usize,
        other_hi: usize,
    },
    #[error("substituted polynomial {index} has a constant term")]
    ConstantInSubstitution { index: usize },
    #[error("division by a series with zero constant term")]
    DivisionByZeroConstant,
    #[error("variable index {index} out of range for {n} inputs")]
    UnknownVariable { index: usize, n: usize },
    #[error("malformed coefficient dump at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}
