//! Block-diagonal preconditioners for the collocated KKT system and its H¹
//! reduction.
//!
//! * `P̃ = diag(M_γ, βM_s, S̃)` with `S̃ = AM_γ⁻¹A`, dropping the low-rank term.
//! * `P_LR = diag(M_γ, βM_s, S_LR)` with `S_LR = X M_γ⁻¹ X`,
//!   `X = A + β^{-1/2} Z1M_s1ᵀZ`, inverted by the Woodbury identity. The
//!   `N_h × N_h` core `L = I + β^{-1/2} M_s Σζ_iA_i⁻¹` is solved exactly, by
//!   its mean approximation `L_M⁻¹ = A_0(A_0 + β^{-1/2}M_s)⁻¹`, or by a
//!   Chebyshev semi-iteration preconditioned with `L_M⁻¹`.
//! * `P_OP = diag(B₁, B₂, B₃)` on `ℝ^{3N_h}` with `B₁ = E_yᵀM_γE_y + βKWK`,
//!   `B₂ = βK`, `B₃ = β⁻¹KWK`, `W = Σζ_iA_i⁻¹`, either replaced by the mean
//!   blocks or inverted by Chebyshev preconditioned with them.

mod chebyshev;
mod inner;

pub use chebyshev::{
    chebyshev_semi_iteration, estimate_lambda_max, try_chebyshev_semi_iteration,
    try_estimate_lambda_max, ChebParams,
};
pub use inner::{BlockSolver, InnerSolver, PcgPreconditioner};

use nalgebra::{DMatrix, DVector, Dyn, LU};
use rayon::prelude::*;

use crate::linalg::{BandCholesky, CsrMatrix};
use crate::saddle::{dense_from_operator, weighted_block_sum, BlockVector, ControlSpace, SaddleSystem};
use crate::vector::{axpy, scale, sub};
use crate::{Error, Real, Result};

/// Power iterations used to calibrate Chebyshev.
pub const DEFAULT_POWER_ITERS: usize = 20;
/// Largest `N·N_h` for which the exact low-rank core is assembled.
pub const DEFAULT_EXACT_CAP: usize = 20_000;
pub const DEFAULT_POWER_SEED: u64 = 7;

/// The six preconditioners.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PreconditionerKind {
    PTilde,
    PLRExact,
    PLRMean,
    PLRCheb { k_it: usize },
    POPMean,
    POPCheb { k_it: usize },
}

impl PreconditionerKind {
    pub const NAMES: [&'static str; 6] = ["ptilde", "plr_exact", "plr_mean", "plr_cheb", "pop_mean", "pop_cheb"];

    pub fn name(self) -> &'static str {
        match self {
            PreconditionerKind::PTilde => "ptilde",
            PreconditionerKind::PLRExact => "plr_exact",
            PreconditionerKind::PLRMean => "plr_mean",
            PreconditionerKind::PLRCheb { .. } => "plr_cheb",
            PreconditionerKind::POPMean => "pop_mean",
            PreconditionerKind::POPCheb { .. } => "pop_cheb",
        }
    }

    /// Parses a name from [`NAMES`](Self::NAMES); Chebyshev kinds take `k_it`.
    pub fn from_name(name: &str, k_it: usize) -> Result<Self> {
        let kind = match name {
            "ptilde" => PreconditionerKind::PTilde,
            "plr_exact" => PreconditionerKind::PLRExact,
            "plr_mean" => PreconditionerKind::PLRMean,
            "plr_cheb" => PreconditionerKind::PLRCheb { k_it },
            "pop_mean" => PreconditionerKind::POPMean,
            "pop_cheb" => PreconditionerKind::POPCheb { k_it },
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown preconditioner {other:?}, expected one of {:?}",
                    Self::NAMES
                )))
            }
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn k_it(self) -> Option<usize> {
        match self {
            PreconditionerKind::PLRCheb { k_it } | PreconditionerKind::POPCheb { k_it } => Some(k_it),
            _ => None,
        }
    }

    /// Control space the preconditioner is defined for.
    pub fn control(self) -> ControlSpace {
        match self {
            PreconditionerKind::POPMean | PreconditionerKind::POPCheb { .. } => ControlSpace::H1,
            _ => ControlSpace::L2,
        }
    }

    /// Acts on the reduced `3N_h` space rather than the full system.
    pub fn is_operator(self) -> bool {
        self.control() == ControlSpace::H1
    }

    pub fn validate(self) -> Result<()> {
        if self.k_it() == Some(0) {
            return Err(Error::InvalidParameter(format!("{} needs k_it ≥ 1", self.name())));
        }
        Ok(())
    }
}

impl std::fmt::Display for PreconditionerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.k_it() {
            Some(k) => write!(f, "{}({k})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

/// Setup options shared by all kinds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrecondOptions<T> {
    pub inner: InnerSolver<T>,
    pub power_iters: usize,
    pub seed: u64,
    pub exact_cap: usize,
}

impl<T> Default for PrecondOptions<T> {
    fn default() -> Self {
        PrecondOptions {
            inner: InnerSolver::Direct,
            power_iters: DEFAULT_POWER_ITERS,
            seed: DEFAULT_POWER_SEED,
            exact_cap: DEFAULT_EXACT_CAP,
        }
    }
}

enum Core<T: Real> {
    Exact { lu: LU<T, Dyn, Dyn>, l: DMatrix<T> },
    Mean,
    Cheb { params: ChebParams<T>, lambda_max: T },
}

struct LowRank<T: Real> {
    c: T,
    /// `A_0 + cM_s`
    shifted: BandCholesky<T>,
    core: Core<T>,
}

struct OperatorBlocks<T: Real> {
    /// `M_s + βA_0`
    shifted: BandCholesky<T>,
    cheb: Option<[(ChebParams<T>, T); 2]>,
}

enum State<T: Real> {
    Tilde,
    LowRank(LowRank<T>),
    Operator(OperatorBlocks<T>),
}

/// A set-up preconditioner; immutable and shareable across threads after construction.
pub struct Preconditioner<T: Real> {
    sys: SaddleSystem<T>,
    kind: PreconditionerKind,
    inner: BlockSolver<T>,
    state: State<T>,
}

impl<T: Real> std::fmt::Debug for Preconditioner<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Preconditioner")
            .field("kind", &self.kind)
            .field("inner", &self.inner.mode())
            .finish()
    }
}

/// Chebyshev parameters from a power-method estimate clamped at 1.
fn cheb_from_estimate<T: Real>(lambda: T, k_it: usize) -> Result<(ChebParams<T>, T)> {
    let lambda = lambda.max(T::one());
    Ok((ChebParams::from_lambda_max(lambda, k_it)?, lambda))
}

impl<T: Real> Preconditioner<T> {
    pub fn new(sys: &SaddleSystem<T>, kind: PreconditionerKind, opts: &PrecondOptions<T>) -> Result<Self> {
        kind.validate()?;
        if sys.control() != kind.control() {
            return Err(Error::ControlSpaceMismatch {
                required: kind.control().name(),
            });
        }
        if opts.power_iters == 0 {
            return Err(Error::InvalidParameter("power method needs at least one iteration".into()));
        }
        let inner = BlockSolver::new(sys, opts.inner)?;
        let mut pc = Preconditioner {
            sys: sys.clone(),
            kind,
            inner,
            state: State::Tilde,
        };
        pc.state = match kind {
            PreconditionerKind::PTilde => State::Tilde,
            PreconditionerKind::PLRExact | PreconditionerKind::PLRMean | PreconditionerKind::PLRCheb { .. } => {
                State::LowRank(pc.setup_low_rank(opts)?)
            }
            PreconditionerKind::POPMean | PreconditionerKind::POPCheb { .. } => {
                State::Operator(pc.setup_operator(opts)?)
            }
        };
        Ok(pc)
    }

    fn setup_low_rank(&self, opts: &PrecondOptions<T>) -> Result<LowRank<T>> {
        let c = T::one() / self.sys.beta().sqrt();
        let shifted = BandCholesky::factor(&CsrMatrix::linear_combination(&[
            (T::one(), self.sys.mean_stiffness()),
            (c, self.sys.mass()),
        ]))?;
        let mut lr = LowRank {
            c,
            shifted,
            core: Core::Mean,
        };
        lr.core = match self.kind {
            PreconditionerKind::PLRExact => {
                let (n, nh) = (self.sys.n_samples(), self.sys.nh());
                if n * nh > opts.exact_cap {
                    return Err(Error::SizeCapExceeded {
                        what: "exact low-rank core",
                        size: n * nh,
                        cap: opts.exact_cap,
                    });
                }
                let l = dense_from_operator(nh, nh, "low-rank core", |x| self.core_operator_with(&lr, x))?;
                Core::Exact { lu: l.clone().lu(), l }
            }
            PreconditionerKind::PLRCheb { k_it } => {
                let lam = try_estimate_lambda_max(
                    |x| self.core_operator_with(&lr, x),
                    |x| Ok(self.core_mean_inverse_with(&lr, x)),
                    self.sys.nh(),
                    opts.power_iters,
                    opts.seed,
                )?;
                let (params, lambda_max) = cheb_from_estimate(lam, k_it)?;
                Core::Cheb { params, lambda_max }
            }
            _ => Core::Mean,
        };
        Ok(lr)
    }

    fn setup_operator(&self, opts: &PrecondOptions<T>) -> Result<OperatorBlocks<T>> {
        let shifted = BandCholesky::factor(&CsrMatrix::linear_combination(&[
            (T::one(), self.sys.mass()),
            (self.sys.beta(), self.sys.mean_stiffness()),
        ]))?;
        let mut ob = OperatorBlocks { shifted, cheb: None };
        if let PreconditionerKind::POPCheb { k_it } = self.kind {
            let nh = self.sys.nh();
            let l1 = try_estimate_lambda_max(
                |x| self.b1_apply(x),
                |x| Ok(self.b1_mean_inverse_with(&ob, x)),
                nh,
                opts.power_iters,
                opts.seed,
            )?;
            let l3 = try_estimate_lambda_max(
                |x| self.b3_apply(x),
                |x| Ok(self.b3_mean_inverse(x)),
                nh,
                opts.power_iters,
                opts.seed,
            )?;
            ob.cheb = Some([cheb_from_estimate(l1, k_it)?, cheb_from_estimate(l3, k_it)?]);
        }
        Ok(ob)
    }

    pub fn kind(&self) -> PreconditionerKind {
        self.kind
    }

    pub fn system(&self) -> &SaddleSystem<T> {
        &self.sys
    }

    pub fn block_solver(&self) -> &BlockSolver<T> {
        &self.inner
    }

    /// Length of the vectors the preconditioner acts on.
    pub fn dim(&self) -> usize {
        if self.kind.is_operator() {
            3 * self.sys.nh()
        } else {
            self.sys.dim()
        }
    }

    /// Power-method estimates of `λ_max` behind the Chebyshev parameters:
    /// `[core]` for the low-rank kind, `[B₁, B₃]` for the operator kind.
    pub fn lambda_max_estimates(&self) -> Vec<T> {
        match &self.state {
            State::LowRank(LowRank {
                core: Core::Cheb { lambda_max, .. },
                ..
            }) => vec![*lambda_max],
            State::Operator(OperatorBlocks { cheb: Some(c), .. }) => vec![c[0].1, c[1].1],
            _ => Vec::new(),
        }
    }

    /// `P⁻¹ r`.
    pub fn apply(&self, r: &[T]) -> Result<Vec<T>> {
        if r.len() != self.dim() {
            return Err(Error::dim("preconditioner apply", self.dim(), r.len()));
        }
        if self.kind.is_operator() {
            let nh = self.sys.nh();
            let (x1, x3) = rayon::join(|| self.b1_inverse(&r[..nh]), || self.b3_inverse(&r[2 * nh..]));
            let mut out = x1?;
            out.extend(self.b2_inverse(&r[nh..2 * nh]));
            out.extend(x3?);
            Ok(out)
        } else {
            let rb = BlockVector::from_flat(r, self.sys.n_samples(), self.sys.nh())?;
            Ok(self.apply_blocks(&rb)?.to_flat())
        }
    }

    /// `diag(M_γ, βM_s, S_approx)⁻¹ r` for the full-system kinds.
    pub fn apply_blocks(&self, r: &BlockVector<T>) -> Result<BlockVector<T>> {
        if self.kind.is_operator() {
            return Err(Error::ControlSpaceMismatch { required: "L2" });
        }
        let mut u = self.sys.lambda_u_solve(&r.u);
        scale(T::one() / self.sys.beta(), &mut u);
        Ok(BlockVector {
            y: self.sys.apply_mgamma_inv(&r.y)?,
            u,
            p: self.schur_inverse(&r.p)?,
        })
    }

    /// Dense `P⁻¹` (tests and oracles).
    pub fn dense(&self, cap: usize) -> Result<DMatrix<T>> {
        dense_from_operator(self.dim(), cap, "preconditioner", |x| self.apply(x))
    }

    /// Inverse Schur approximation: `A⁻¹M_γA⁻¹` for `P̃`, `X⁻¹M_γX⁻¹` for the low-rank kinds.
    pub fn schur_inverse(&self, v: &[T]) -> Result<Vec<T>> {
        match &self.state {
            State::Tilde => {
                let t = self.inner.solve_weighted(v)?;
                self.inner.solve_weighted(&self.sys.apply_mgamma(&t)?)
            }
            State::LowRank(lr) => {
                let t = self.core_inverse_with(lr, v)?;
                self.core_inverse_with(lr, &self.sys.apply_mgamma(&t)?)
            }
            State::Operator(_) => Err(Error::ControlSpaceMismatch { required: "L2" }),
        }
    }

    fn low_rank(&self) -> Result<&LowRank<T>> {
        match &self.state {
            State::LowRank(lr) => Ok(lr),
            _ => Err(Error::InvalidParameter(format!("{} has no low-rank core", self.kind.name()))),
        }
    }

    fn operator_blocks(&self) -> Result<&OperatorBlocks<T>> {
        match &self.state {
            State::Operator(ob) => Ok(ob),
            _ => Err(Error::InvalidParameter(format!("{} has no operator blocks", self.kind.name()))),
        }
    }

    /// Approximate `(A + β^{-1/2}Z1M_s1ᵀZ)⁻¹ w` by the Woodbury identity with the configured core solve.
    pub fn core_inverse(&self, w: &[T]) -> Result<Vec<T>> {
        self.core_inverse_with(self.low_rank()?, w)
    }

    /// `L x = x + β^{-1/2} M_s Σζ_iA_i⁻¹ x`.
    pub fn core_operator(&self, x: &[T]) -> Result<Vec<T>> {
        self.core_operator_with(self.low_rank()?, x)
    }

    /// Mean approximation `L_M⁻¹ x = A_0(A_0 + β^{-1/2}M_s)⁻¹ x`.
    pub fn core_mean_inverse(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.core_mean_inverse_with(self.low_rank()?, x))
    }

    fn core_operator_with(&self, lr: &LowRank<T>, x: &[T]) -> Result<Vec<T>> {
        let mut out = self.sys.mass().mul_vec(&self.inner.mean_of_inverses(x)?);
        scale(lr.c, &mut out);
        axpy(T::one(), x, &mut out);
        Ok(out)
    }

    fn core_mean_inverse_with(&self, lr: &LowRank<T>, x: &[T]) -> Vec<T> {
        self.sys.mean_stiffness().mul_vec(&lr.shifted.solve(x))
    }

    fn core_solve(&self, lr: &LowRank<T>, h: &[T]) -> Result<Vec<T>> {
        match &lr.core {
            Core::Mean => Ok(self.core_mean_inverse_with(lr, h)),
            Core::Cheb { params, .. } => try_chebyshev_semi_iteration(
                |x| self.core_operator_with(lr, x),
                |x| Ok(self.core_mean_inverse_with(lr, x)),
                h,
                params,
            ),
            Core::Exact { lu, l } => {
                let hv = DVector::from_column_slice(h);
                let fail = || Error::CoreSolveFailure("singular core matrix".into());
                let mut g = lu.solve(&hv).ok_or_else(fail)?;
                g += lu.solve(&(&hv - l * &g)).ok_or_else(fail)?;
                let res = (&hv - l * &g).norm();
                let hn = hv.norm();
                let tol = T::lit(1e-12).max(T::eps() * T::lit(1e4));
                if hn > T::zero() && !(res <= tol * hn) {
                    return Err(Error::CoreSolveFailure(format!(
                        "relative residual {:e}",
                        (res / hn).as_f64()
                    )));
                }
                Ok(g.as_slice().to_vec())
            }
        }
    }

    fn core_inverse_with(&self, lr: &LowRank<T>, w: &[T]) -> Result<Vec<T>> {
        let nh = self.sys.nh();
        let t = self.inner.solve_weighted(w)?;
        let mut h = self.sys.mass().mul_vec(&weighted_block_sum(&t, nh, self.sys.zeta()));
        scale(lr.c, &mut h);
        let g = self.core_solve(lr, &h)?;
        Ok(sub(&t, &self.inner.solve_each(&g)?))
    }

    /// `B₁ x = E_yᵀM_γE_y x + βKWK x`.
    pub fn b1_apply(&self, x: &[T]) -> Result<Vec<T>> {
        let nh = self.sys.nh();
        let k = self.sys.laplacian();
        let kx = k.mul_vec(x);
        let mut m = self.sys.apply_mgamma(&self.inner.solve_each(&kx)?)?;
        let beta = self.sys.beta();
        m.par_chunks_mut(nh).zip(self.sys.zeta().par_iter()).for_each(|(blk, &z)| axpy(beta * z, &kx, blk));
        let ones = vec![T::one(); self.sys.n_samples()];
        Ok(k.mul_vec(&weighted_block_sum(&self.inner.solve_blocks(&m)?, nh, &ones)))
    }

    /// `B₂ x = βK x`.
    pub fn b2_apply(&self, x: &[T]) -> Vec<T> {
        let mut out = self.sys.laplacian().mul_vec(x);
        scale(self.sys.beta(), &mut out);
        out
    }

    /// `B₃ x = β⁻¹KWK x`.
    pub fn b3_apply(&self, x: &[T]) -> Result<Vec<T>> {
        let k = self.sys.laplacian();
        let mut out = k.mul_vec(&self.inner.mean_of_inverses(&k.mul_vec(x))?);
        scale(T::one() / self.sys.beta(), &mut out);
        Ok(out)
    }

    /// `B₁,M⁻¹ x = K⁻¹A_0(M_s + βA_0)⁻¹A_0K⁻¹ x`.
    pub fn b1_mean_inverse(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.b1_mean_inverse_with(self.operator_blocks()?, x))
    }

    fn b1_mean_inverse_with(&self, ob: &OperatorBlocks<T>, x: &[T]) -> Vec<T> {
        let a0 = self.sys.mean_stiffness();
        let t = a0.mul_vec(&self.sys.laplacian_solve(x));
        self.sys.laplacian_solve(&a0.mul_vec(&ob.shifted.solve(&t)))
    }

    /// `B₂⁻¹ x = β⁻¹K⁻¹ x`.
    pub fn b2_inverse(&self, x: &[T]) -> Vec<T> {
        let mut out = self.sys.laplacian_solve(x);
        scale(T::one() / self.sys.beta(), &mut out);
        out
    }

    /// `B₃,M⁻¹ x = βK⁻¹A_0K⁻¹ x`.
    pub fn b3_mean_inverse(&self, x: &[T]) -> Vec<T> {
        let a0 = self.sys.mean_stiffness();
        let mut out = self.sys.laplacian_solve(&a0.mul_vec(&self.sys.laplacian_solve(x)));
        scale(self.sys.beta(), &mut out);
        out
    }

    /// Configured approximation of `B₁⁻¹`.
    pub fn b1_inverse(&self, x: &[T]) -> Result<Vec<T>> {
        let ob = self.operator_blocks()?;
        match &ob.cheb {
            None => Ok(self.b1_mean_inverse_with(ob, x)),
            Some([(p, _), _]) => {
                try_chebyshev_semi_iteration(|v| self.b1_apply(v), |v| Ok(self.b1_mean_inverse_with(ob, v)), x, p)
            }
        }
    }

    /// Configured approximation of `B₃⁻¹`.
    pub fn b3_inverse(&self, x: &[T]) -> Result<Vec<T>> {
        let ob = self.operator_blocks()?;
        match &ob.cheb {
            None => Ok(self.b3_mean_inverse(x)),
            Some([_, (p, _)]) => {
                try_chebyshev_semi_iteration(|v| self.b3_apply(v), |v| Ok(self.b3_mean_inverse(v)), x, p)
            }
        }
    }
}
