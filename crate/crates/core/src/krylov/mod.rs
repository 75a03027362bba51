//! Krylov solvers for the outer saddle systems and inner SPD solves, plus
//! spectral diagnostics of preconditioned operators.

mod cg;
mod minres;
mod report;
mod spectrum;

pub use cg::cg;
pub use minres::minres;
pub use report::{SolveReport, SpectrumReport};
pub use spectrum::{
    dense_spectrum, dense_spectrum_with_inverse, lanczos_extremal, operator_spectrum,
    reduced_spectrum, saddle_spectrum, schur_spectrum, tilde_schur_spectrum, SpectrumMethod,
    DEFAULT_DENSE_CAP, NEAR_ONE_TOL,
};

/// Identity preconditioner for unpreconditioned runs.
pub fn identity<T: Clone>(v: &[T]) -> crate::Result<Vec<T>> {
    Ok(v.to_vec())
}
