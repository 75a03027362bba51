//! Per-sample stiffness solves `A_i⁻¹`, direct or by PCG.

use rayon::prelude::*;

use crate::krylov::cg;
use crate::linalg::BandCholesky;
use crate::saddle::{weighted_block_sum, SaddleSystem};
use crate::{Error, Real, Result};

/// Preconditioner of the inner conjugate gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PcgPreconditioner {
    /// Diagonal of `A_i`.
    Jacobi,
    /// Band Cholesky factor of the weighted mean stiffness `A_0`.
    MeanFactor,
}

/// How `A_i⁻¹` is applied inside the preconditioners.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InnerSolver<T> {
    /// Band Cholesky factorization of every sample, reused across applies.
    Direct,
    /// Conjugate gradients to a relative residual `tol`; failing to reach it is an error.
    Pcg {
        tol: T,
        maxit: usize,
        preconditioner: PcgPreconditioner,
    },
}

impl<T: Real> InnerSolver<T> {
    pub fn validate(&self) -> Result<()> {
        if let InnerSolver::Pcg { tol, maxit, .. } = *self {
            if !(tol > T::zero()) {
                return Err(Error::InvalidParameter(format!("inner tolerance must be positive, got {tol}")));
            }
            if maxit == 0 {
                return Err(Error::InvalidParameter("inner PCG needs maxit ≥ 1".into()));
            }
        }
        Ok(())
    }
}

/// Applies `A_i⁻¹` for every collocation sample of a system.
pub struct BlockSolver<T: Real> {
    sys: SaddleSystem<T>,
    mode: InnerSolver<T>,
    mean_factor: Option<BandCholesky<T>>,
    diagonals: Vec<Vec<T>>,
}

impl<T: Real> BlockSolver<T> {
    pub fn new(sys: &SaddleSystem<T>, mode: InnerSolver<T>) -> Result<Self> {
        mode.validate()?;
        let mut mean_factor = None;
        let mut diagonals = Vec::new();
        match mode {
            InnerSolver::Direct => {
                sys.stiffness_factors()?;
            }
            InnerSolver::Pcg {
                preconditioner: PcgPreconditioner::MeanFactor,
                ..
            } => mean_factor = Some(BandCholesky::factor(sys.mean_stiffness())?),
            InnerSolver::Pcg {
                preconditioner: PcgPreconditioner::Jacobi,
                ..
            } => diagonals = sys.stiffness().iter().map(|a| a.diagonal()).collect(),
        }
        Ok(BlockSolver {
            sys: sys.clone(),
            mode,
            mean_factor,
            diagonals,
        })
    }

    pub fn mode(&self) -> InnerSolver<T> {
        self.mode
    }

    /// `A_i⁻¹ x` for sample `i` (unweighted).
    pub fn solve(&self, i: usize, x: &[T]) -> Result<Vec<T>> {
        match self.mode {
            InnerSolver::Direct => self.sys.exact_stiffness_solve(i, x),
            InnerSolver::Pcg { tol, maxit, .. } => {
                let a = &self.sys.stiffness()[i];
                let (sol, rep) = cg(
                    |v| Ok(a.mul_vec(v)),
                    |v| Ok(self.precondition(i, v)),
                    x,
                    tol,
                    maxit,
                )?;
                if !rep.converged {
                    return Err(Error::InnerSolveFailure {
                        sample: i,
                        residual: rep.final_residual(),
                    });
                }
                Ok(sol)
            }
        }
    }

    fn precondition(&self, i: usize, v: &[T]) -> Vec<T> {
        match &self.mean_factor {
            Some(f) => f.solve(v),
            None => v.iter().zip(&self.diagonals[i]).map(|(&x, &d)| x / d).collect(),
        }
    }

    /// `(A_i⁻¹ v_i)_i` over stacked sample blocks.
    pub fn solve_blocks(&self, v: &[T]) -> Result<Vec<T>> {
        let nh = self.sys.nh();
        let n = self.sys.n_samples();
        if v.len() != n * nh {
            return Err(Error::dim("block solve", n * nh, v.len()));
        }
        let blocks = v
            .par_chunks(nh)
            .enumerate()
            .map(|(i, x)| self.solve(i, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(blocks.concat())
    }

    /// `A⁻¹ v = (A_i⁻¹ v_i / ζ_i)_i` for the weighted block operator `A = diag(ζ_i A_i)`.
    pub fn solve_weighted(&self, v: &[T]) -> Result<Vec<T>> {
        let mut out = self.solve_blocks(v)?;
        let nh = self.sys.nh();
        for (blk, &z) in out.chunks_mut(nh).zip(self.sys.zeta()) {
            blk.iter_mut().for_each(|e| *e /= z);
        }
        Ok(out)
    }

    /// `(A_i⁻¹ x)_i` stacked, for a single vector `x`.
    pub fn solve_each(&self, x: &[T]) -> Result<Vec<T>> {
        let nh = self.sys.nh();
        if x.len() != nh {
            return Err(Error::dim("replicated solve", nh, x.len()));
        }
        let parts = (0..self.sys.n_samples())
            .into_par_iter()
            .map(|i| self.solve(i, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(parts.concat())
    }

    /// `Σ_i c_i A_i⁻¹ x` for a single vector `x`, summed in ascending `i`.
    pub fn combine(&self, c: &[T], x: &[T]) -> Result<Vec<T>> {
        Ok(weighted_block_sum(&self.solve_each(x)?, self.sys.nh(), c))
    }

    /// `W x = Σ_i ζ_i A_i⁻¹ x`.
    pub fn mean_of_inverses(&self, x: &[T]) -> Result<Vec<T>> {
        self.combine(self.sys.zeta(), x)
    }
}
