//! Dense complex linear algebra and sparse recovery.

use alloc::vec::Vec;

mod basis_pursuit;
mod matrix;
mod qr;
mod solve;
mod svd;

pub use basis_pursuit::{
    basis_pursuit, basis_pursuit_denoise, basis_pursuit_with, AdmmSettings, BasisPursuitProblem,
    BasisPursuitReport, SymmetryMap,
};
pub use matrix::{axpy, dotc, norm1, norm2, norm_inf, ComplexMatrix};
pub use qr::{qr_pivoted, PivotedQR};
pub(crate) use qr::numerical_rank;
pub use solve::{inverse, lstsq, Lu};
pub use svd::{pinv, svd, Svd};

/// Complex double.
pub type C64 = num_complex::Complex<f64>;

/// Default numerical-rank threshold on `|R[i,i]| / |R[0,0]|`.
pub const DEFAULT_RANK_TAU: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("constraints are infeasible (relative residual {residual:.3e})")]
    Infeasible { residual: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<C64>,
    },
}
