//! Stochastic-collocation saddle-point systems for robust optimal control of an
//! elliptic PDE with random coefficients, together with block preconditioners,
//! Krylov solvers, and spectral diagnostics.

pub mod error;
pub mod fem;
pub mod krylov;
pub mod linalg;
pub mod precond;
pub mod quadrature;
pub mod random_field;
pub mod saddle;
pub mod scalar;
pub mod vector;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use krylov::{SolveReport, SpectrumReport};
pub use precond::{InnerSolver, PrecondOptions, Preconditioner, PreconditionerKind};
pub use saddle::{BlockVector, ControlSpace, MassSolver, ReducedSystem, SaddleSystem, SystemParams};
pub use scalar::Real;

pub type CsrMatrixF64 = linalg::CsrMatrix<f64>;
pub type SaddleSystemF64 = SaddleSystem<f64>;
pub type SystemParamsF64 = SystemParams<f64>;
pub type BlockVectorF64 = BlockVector<f64>;
pub type PreconditionerF64 = Preconditioner<f64>;
pub type PrecondOptionsF64 = PrecondOptions<f64>;
pub type FieldModelF64 = random_field::FieldModel<f64>;
pub type CollocationSetF64 = quadrature::CollocationSet<f64>;
