//! The collocated KKT system held matrix-free, with its Schur complement,
//! the variance-penalized mass operator `M_γ`, and the reduced operator
//! `Eᵀ𝒮E` used with an H¹ control.
//!
//! Sample blocks are stored contiguously: block `i` of a vector in
//! `ℝ^{N·N_h}` occupies entries `i·N_h .. (i+1)·N_h`.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::fem::{assemble_laplacian, assemble_mass, assemble_stiffness, default_target, FeSpace};
use crate::linalg::{BandCholesky, CsrMatrix};
use crate::precond::{chebyshev_semi_iteration, ChebParams};
use crate::quadrature::CollocationSet;
use crate::random_field::{eval_field, FieldModel};
use crate::vector::{axpy, dot, norm};
use crate::{Error, Real, Result};

/// Riesz map of the control space: `M_s` for L², `K` for H¹.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlSpace {
    L2,
    H1,
}

impl ControlSpace {
    pub fn name(self) -> &'static str {
        match self {
            ControlSpace::L2 => "L2",
            ControlSpace::H1 => "H1",
        }
    }
}

/// How `M_s⁻¹` is realized inside `M_γ⁻¹` and the control block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassSolver {
    /// Band Cholesky factorization.
    Direct,
    /// Fixed number of Chebyshev steps preconditioned by `diag(M_s)`, using the
    /// P1 bound `σ(diag(M_s)⁻¹M_s) ⊂ [1/2, 2]`.
    Chebyshev { steps: usize },
}

/// Scalar parameters of the optimal control problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemParams<T> {
    pub beta: T,
    pub gamma: T,
    pub control: ControlSpace,
    pub mass_solver: MassSolver,
}

impl<T: Real> SystemParams<T> {
    /// L² control with exact mass solves.
    pub fn new(beta: T, gamma: T) -> Self {
        SystemParams {
            beta,
            gamma,
            control: ControlSpace::L2,
            mass_solver: MassSolver::Direct,
        }
    }

    pub fn with_control(mut self, control: ControlSpace) -> Self {
        self.control = control;
        self
    }

    pub fn with_mass_solver(mut self, mass_solver: MassSolver) -> Self {
        self.mass_solver = mass_solver;
        self
    }
}

/// State, control and adjoint blocks `(y, u, p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVector<T> {
    pub y: Vec<T>,
    pub u: Vec<T>,
    pub p: Vec<T>,
}

impl<T: Real> BlockVector<T> {
    pub fn zeros(n_samples: usize, nh: usize) -> Self {
        BlockVector {
            y: vec![T::zero(); n_samples * nh],
            u: vec![T::zero(); nh],
            p: vec![T::zero(); n_samples * nh],
        }
    }

    /// Splits a flat vector `[y; u; p]`.
    pub fn from_flat(x: &[T], n_samples: usize, nh: usize) -> Result<Self> {
        let len = (2 * n_samples + 1) * nh;
        if x.len() != len {
            return Err(Error::dim("block vector", len, x.len()));
        }
        let ny = n_samples * nh;
        Ok(BlockVector {
            y: x[..ny].to_vec(),
            u: x[ny..ny + nh].to_vec(),
            p: x[ny + nh..].to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.y);
        v.extend_from_slice(&self.u);
        v.extend_from_slice(&self.p);
        v
    }

    pub fn len(&self) -> usize {
        self.y.len() + self.u.len() + self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dot(&self, other: &Self) -> T {
        dot(&self.y, &other.y) + dot(&self.u, &other.u) + dot(&self.p, &other.p)
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }
}

/// Applies `f(i, block_i)` to every sample block in parallel.
pub(crate) fn map_blocks<T: Real>(
    v: &[T],
    nh: usize,
    f: impl Fn(usize, &[T]) -> Vec<T> + Sync + Send,
) -> Vec<T> {
    let mut out = vec![T::zero(); v.len()];
    out.par_chunks_mut(nh)
        .zip(v.par_chunks(nh))
        .enumerate()
        .for_each(|(i, (o, x))| o.copy_from_slice(&f(i, x)));
    out
}

/// Fallible variant of [`map_blocks`]; the first failing block (lowest index) wins.
pub(crate) fn try_map_blocks<T: Real>(
    v: &[T],
    nh: usize,
    f: impl Fn(usize, &[T]) -> Result<Vec<T>> + Sync + Send,
) -> Result<Vec<T>> {
    let blocks: Vec<Result<Vec<T>>> = v
        .par_chunks(nh)
        .enumerate()
        .map(|(i, x)| f(i, x))
        .collect();
    let mut out = Vec::with_capacity(v.len());
    for b in blocks {
        out.extend(b?);
    }
    Ok(out)
}

/// `Σ_i c_i v_i` over sample blocks, summed in ascending `i`.
pub(crate) fn weighted_block_sum<T: Real>(v: &[T], nh: usize, c: &[T]) -> Vec<T> {
    let mut s = vec![T::zero(); nh];
    for (x, &ci) in v.chunks(nh).zip(c) {
        axpy(ci, x, &mut s);
    }
    s
}

/// Dense matrix of a linear map, column by column.
pub fn dense_from_operator<T: Real>(
    dim: usize,
    cap: usize,
    what: &'static str,
    apply: impl Fn(&[T]) -> Result<Vec<T>>,
) -> Result<DMatrix<T>> {
    if dim > cap {
        return Err(Error::SizeCapExceeded {
            what,
            size: dim,
            cap,
        });
    }
    let mut d = DMatrix::zeros(dim, dim);
    let mut e = vec![T::zero(); dim];
    for j in 0..dim {
        e[j] = T::one();
        let col = apply(&e)?;
        if col.len() != dim {
            return Err(Error::dim(what, dim, col.len()));
        }
        d.set_column(j, &nalgebra::DVector::from_vec(col));
        e[j] = T::zero();
    }
    Ok(d)
}

/// Fully discrete KKT operator
///
/// ```text
/// 𝒮 = [ M_γ   0        A      ]      b = [ Z1 M_s y_d ]
///     [ 0     βΛ_U   −Λ_U 1ᵀZ ]          [ 0          ]
///     [ A    −Z1Λ_U    0      ]          [ Z1 f       ]
/// ```
///
/// with `A = diag(ζ_i A_i)`, `M = diag(M_s)`, `Z = diag(ζ_i I)`, `1` the
/// stacked identities and `M_γ = M((1+γ)Z − γZ11ᵀZ)`.
pub struct SaddleSystem<T: Real> {
    data: Arc<SharedData<T>>,
    params: SystemParams<T>,
}

/// Parameter-independent data, shared between systems that differ only in `β`, `γ`
/// or the control space.
struct SharedData<T: Real> {
    nh: usize,
    a_list: Vec<CsrMatrix<T>>,
    zeta: Vec<T>,
    m_s: CsrMatrix<T>,
    k: CsrMatrix<T>,
    a0: CsrMatrix<T>,
    m_chol: BandCholesky<T>,
    k_chol: BandCholesky<T>,
    m_diag: Vec<T>,
    a_factors: OnceLock<Vec<BandCholesky<T>>>,
    rhs: BlockVector<T>,
}

impl<T: Real> Clone for SaddleSystem<T> {
    fn clone(&self) -> Self {
        SaddleSystem {
            data: Arc::clone(&self.data),
            params: self.params,
        }
    }
}

impl<T: Real> std::fmt::Debug for SaddleSystem<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SaddleSystem")
            .field("nh", &self.data.nh)
            .field("samples", &self.data.zeta.len())
            .field("params", &self.params)
            .finish()
    }
}

fn validate_params<T: Real>(params: &SystemParams<T>) -> Result<()> {
    if !(params.beta > T::zero()) {
        return Err(Error::InvalidParameter(format!("β must be positive, got {}", params.beta)));
    }
    if !(params.gamma >= T::zero()) {
        return Err(Error::InvalidParameter(format!("γ must be nonnegative, got {}", params.gamma)));
    }
    if let MassSolver::Chebyshev { steps: 0 } = params.mass_solver {
        return Err(Error::InvalidParameter("mass Chebyshev needs at least one step".into()));
    }
    Ok(())
}

impl<T: Real> SaddleSystem<T> {
    /// Builds the system from per-sample stiffness matrices and weights.
    ///
    /// `f` is the discrete load functional (already integrated against the basis).
    pub fn from_matrices(
        a_list: Vec<CsrMatrix<T>>,
        zeta: Vec<T>,
        m_s: CsrMatrix<T>,
        k: CsrMatrix<T>,
        params: SystemParams<T>,
        y_d: &[T],
        f: &[T],
    ) -> Result<Self> {
        let nh = m_s.nrows();
        let n = zeta.len();
        if n == 0 || a_list.len() != n {
            return Err(Error::dim("stiffness list", n, a_list.len()));
        }
        for a in a_list.iter().chain([&m_s, &k]) {
            if a.nrows() != nh || a.ncols() != nh {
                return Err(Error::dim("system matrix", nh, a.nrows()));
            }
        }
        if y_d.len() != nh {
            return Err(Error::dim("target state", nh, y_d.len()));
        }
        if f.len() != nh {
            return Err(Error::dim("source", nh, f.len()));
        }
        validate_params(&params)?;
        if zeta.iter().any(|&z| !(z > T::zero())) {
            return Err(Error::InvalidParameter("weights must be positive".into()));
        }
        let terms: Vec<(T, &CsrMatrix<T>)> = zeta.iter().copied().zip(a_list.iter()).collect();
        let a0 = CsrMatrix::linear_combination(&terms);
        let m_chol = BandCholesky::factor(&m_s)?;
        let k_chol = BandCholesky::factor(&k)?;
        let m_diag = m_s.diagonal();

        let my = m_s.mul_vec(y_d);
        let mut rhs = BlockVector::zeros(n, nh);
        for (i, &z) in zeta.iter().enumerate() {
            for j in 0..nh {
                rhs.y[i * nh + j] = z * my[j];
                rhs.p[i * nh + j] = z * f[j];
            }
        }
        let data = SharedData {
            nh,
            a_list,
            zeta,
            m_s,
            k,
            a0,
            m_chol,
            k_chol,
            m_diag,
            a_factors: OnceLock::new(),
            rhs,
        };
        Ok(SaddleSystem {
            data: Arc::new(data),
            params,
        })
    }

    /// Same matrices and right-hand side with different scalar parameters;
    /// factorizations are shared.
    pub fn with_params(&self, params: SystemParams<T>) -> Result<Self> {
        validate_params(&params)?;
        Ok(SaddleSystem {
            data: Arc::clone(&self.data),
            params,
        })
    }

    /// Assembles `A_i` from the field model at every collocation node.
    ///
    /// `y_d` defaults to `sin(πx)sin(πy)` at the dofs and `f` to zero.
    pub fn assemble(
        space: &FeSpace,
        model: &FieldModel<T>,
        colloc: &CollocationSet<T>,
        params: SystemParams<T>,
        y_d: Option<&[T]>,
        f: Option<&[T]>,
    ) -> Result<Self> {
        if colloc.dim() != model.param_dim() {
            return Err(Error::dim("collocation dimension", model.param_dim(), colloc.dim()));
        }
        let a_list = colloc
            .nodes()
            .par_iter()
            .map(|xi| assemble_stiffness(space, &eval_field(model, space, xi)?))
            .collect::<Result<Vec<_>>>()?;
        let target = match y_d {
            Some(v) => v.to_vec(),
            None => default_target(space),
        };
        let source = match f {
            Some(v) => v.to_vec(),
            None => vec![T::zero(); space.ndofs()],
        };
        Self::from_matrices(
            a_list,
            colloc.weights().to_vec(),
            assemble_mass(space),
            assemble_laplacian(space),
            params,
            &target,
            &source,
        )
    }

    pub fn nh(&self) -> usize {
        self.data.nh
    }

    pub fn n_samples(&self) -> usize {
        self.data.zeta.len()
    }

    /// Length of the full unknown `(y, u, p)`.
    pub fn dim(&self) -> usize {
        (2 * self.n_samples() + 1) * self.data.nh
    }

    pub fn params(&self) -> &SystemParams<T> {
        &self.params
    }

    pub fn beta(&self) -> T {
        self.params.beta
    }

    pub fn gamma(&self) -> T {
        self.params.gamma
    }

    pub fn control(&self) -> ControlSpace {
        self.params.control
    }

    pub fn zeta(&self) -> &[T] {
        &self.data.zeta
    }

    pub fn stiffness(&self) -> &[CsrMatrix<T>] {
        &self.data.a_list
    }

    pub fn mass(&self) -> &CsrMatrix<T> {
        &self.data.m_s
    }

    pub fn laplacian(&self) -> &CsrMatrix<T> {
        &self.data.k
    }

    /// Weighted mean stiffness `A_0 = Σ ζ_i A_i`.
    pub fn mean_stiffness(&self) -> &CsrMatrix<T> {
        &self.data.a0
    }

    pub fn rhs(&self) -> &BlockVector<T> {
        &self.data.rhs
    }

    /// Riesz matrix `Λ_U` of the control space.
    pub fn lambda_u(&self) -> &CsrMatrix<T> {
        match self.params.control {
            ControlSpace::L2 => &self.data.m_s,
            ControlSpace::H1 => &self.data.k,
        }
    }

    pub(crate) fn lambda_u_solve(&self, x: &[T]) -> Vec<T> {
        match self.params.control {
            ControlSpace::L2 => self.mass_solve(x),
            ControlSpace::H1 => self.data.k_chol.solve(x),
        }
    }

    pub fn laplacian_solve(&self, x: &[T]) -> Vec<T> {
        self.data.k_chol.solve(x)
    }

    /// Band Cholesky factors of every `A_i`, computed once on first use.
    pub fn stiffness_factors(&self) -> Result<&[BandCholesky<T>]> {
        if let Some(f) = self.data.a_factors.get() {
            return Ok(f);
        }
        let factors = self
            .data
            .a_list
            .par_iter()
            .map(BandCholesky::factor)
            .collect::<Result<Vec<_>>>()?;
        Ok(self.data.a_factors.get_or_init(|| factors))
    }

    /// `A_i⁻¹ x` by the band factorization, with the residual checked.
    pub fn exact_stiffness_solve(&self, i: usize, x: &[T]) -> Result<Vec<T>> {
        let sol = self.stiffness_factors()?[i].solve(x);
        let res = crate::vector::sub(x, &self.data.a_list[i].mul_vec(&sol));
        let bn = norm(x);
        let rel = if bn > T::zero() { norm(&res) / bn } else { T::zero() };
        let tol = T::lit(1e-11).max(T::eps() * T::lit(1e4));
        if !(rel <= tol) {
            return Err(Error::InnerSolveFailure {
                sample: i,
                residual: rel.as_f64(),
            });
        }
        Ok(sol)
    }

    /// `M_s⁻¹ x` per the configured mass solver.
    pub fn mass_solve(&self, x: &[T]) -> Vec<T> {
        match self.params.mass_solver {
            MassSolver::Direct => self.data.m_chol.solve(x),
            MassSolver::Chebyshev { steps } => {
                let params = ChebParams::from_bounds(T::lit(0.5), T::lit(2.0), steps)
                    .expect("fixed P1 mass bounds");
                chebyshev_semi_iteration(
                    |v| self.data.m_s.mul_vec(v),
                    |v| v.iter().zip(&self.data.m_diag).map(|(&a, &d)| a / d).collect(),
                    x,
                    &params,
                )
            }
        }
    }

    fn check_blocks(&self, v: &[T], context: &'static str) -> Result<()> {
        let len = self.n_samples() * self.data.nh;
        if v.len() != len {
            return Err(Error::dim(context, len, v.len()));
        }
        Ok(())
    }

    fn require_l2(&self) -> Result<()> {
        if self.params.control != ControlSpace::L2 {
            return Err(Error::ControlSpaceMismatch { required: "L2" });
        }
        Ok(())
    }

    /// `A v = (ζ_i A_i v_i)_i`.
    pub fn apply_a(&self, v: &[T]) -> Vec<T> {
        map_blocks(v, self.data.nh, |i, x| {
            let mut y = self.data.a_list[i].mul_vec(x);
            y.iter_mut().for_each(|e| *e *= self.data.zeta[i]);
            y
        })
    }

    /// `M_γ v = M((1+γ)Z − γZ11ᵀZ) v`.
    pub fn apply_mgamma(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_blocks(v, "M_γ apply")?;
        let g = self.params.gamma;
        let mean = weighted_block_sum(v, self.data.nh, &self.data.zeta);
        Ok(map_blocks(v, self.data.nh, |i, x| {
            let z = self.data.zeta[i];
            let w: Vec<T> = x
                .iter()
                .zip(&mean)
                .map(|(&xi, &mi)| (T::one() + g) * z * xi - g * z * mi)
                .collect();
            self.data.m_s.mul_vec(&w)
        }))
    }

    /// `M_γ⁻¹ v = (Z⁻¹/(1+γ) + γ/(1+γ) 11ᵀ) M⁻¹ v`.
    pub fn apply_mgamma_inv(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_blocks(v, "M_γ inverse")?;
        let g = self.params.gamma;
        let s = map_blocks(v, self.data.nh, |_, x| self.mass_solve(x));
        let ones = vec![T::one(); self.n_samples()];
        let total = weighted_block_sum(&s, self.data.nh, &ones);
        let c = g / (T::one() + g);
        Ok(map_blocks(&s, self.data.nh, |i, x| {
            let d = T::one() / ((T::one() + g) * self.data.zeta[i]);
            x.iter().zip(&total).map(|(&xi, &ti)| d * xi + c * ti).collect()
        }))
    }

    /// `𝒮 x`.
    pub fn apply_saddle(&self, x: &BlockVector<T>) -> Result<BlockVector<T>> {
        self.check_blocks(&x.y, "saddle apply (y)")?;
        self.check_blocks(&x.p, "saddle apply (p)")?;
        if x.u.len() != self.data.nh {
            return Err(Error::dim("saddle apply (u)", self.data.nh, x.u.len()));
        }
        let lam = self.lambda_u();
        let mut y = self.apply_mgamma(&x.y)?;
        axpy(T::one(), &self.apply_a(&x.p), &mut y);

        let mut u = lam.mul_vec(&x.u);
        u.iter_mut().for_each(|e| *e *= self.params.beta);
        let pbar = weighted_block_sum(&x.p, self.data.nh, &self.data.zeta);
        axpy(-T::one(), &lam.mul_vec(&pbar), &mut u);

        let lu = lam.mul_vec(&x.u);
        let mut p = self.apply_a(&x.y);
        for (i, blk) in p.chunks_mut(self.data.nh).enumerate() {
            axpy(-self.data.zeta[i], &lu, blk);
        }
        Ok(BlockVector { y, u, p })
    }

    /// `𝒮 x` on a flat vector `[y; u; p]`.
    pub fn apply_saddle_flat(&self, x: &[T]) -> Result<Vec<T>> {
        let bx = BlockVector::from_flat(x, self.n_samples(), self.data.nh)?;
        Ok(self.apply_saddle(&bx)?.to_flat())
    }

    /// `S̃ v = A M_γ⁻¹ A v`.
    pub fn apply_schur_tilde(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_blocks(v, "Schur approximation")?;
        Ok(self.apply_a(&self.apply_mgamma_inv(&self.apply_a(v))?))
    }

    /// Exact Schur complement `S v = (A M_γ⁻¹ A + β⁻¹ Z1 M_s 1ᵀZ) v`; L² control only.
    pub fn apply_schur(&self, v: &[T]) -> Result<Vec<T>> {
        self.require_l2()?;
        let mut out = self.apply_schur_tilde(v)?;
        let mv = self.data.m_s.mul_vec(&weighted_block_sum(v, self.data.nh, &self.data.zeta));
        let inv_beta = T::one() / self.params.beta;
        for (i, blk) in out.chunks_mut(self.data.nh).enumerate() {
            axpy(inv_beta * self.data.zeta[i], &mv, blk);
        }
        Ok(out)
    }

    /// Dense `𝒮` (tests and export), refusing instances above `cap` unknowns.
    pub fn dense_saddle(&self, cap: usize) -> Result<DMatrix<T>> {
        dense_from_operator(self.dim(), cap, "saddle matrix", |x| self.apply_saddle_flat(x))
    }

    /// Dense exact Schur complement.
    pub fn dense_schur(&self, cap: usize) -> Result<DMatrix<T>> {
        self.require_l2()?;
        dense_from_operator(self.n_samples() * self.data.nh, cap, "Schur complement", |x| {
            self.apply_schur(x)
        })
    }
}

/// Restriction `𝒮_OP = Eᵀ𝒮E` with `E = diag(A⁻¹Z1K, I, A⁻¹Z1K)`, acting on
/// `ℝ^{3N_h}`; requires the H¹ control.
#[derive(Debug)]
pub struct ReducedSystem<'a, T: Real> {
    sys: &'a SaddleSystem<T>,
}

impl<'a, T: Real> ReducedSystem<'a, T> {
    pub fn new(sys: &'a SaddleSystem<T>) -> Result<Self> {
        if sys.control() != ControlSpace::H1 {
            return Err(Error::ControlSpaceMismatch { required: "H1" });
        }
        sys.stiffness_factors()?;
        Ok(ReducedSystem { sys })
    }

    pub fn system(&self) -> &'a SaddleSystem<T> {
        self.sys
    }

    pub fn dim(&self) -> usize {
        3 * self.sys.data.nh
    }

    /// `E_y x = (A_i⁻¹ K x)_i`.
    pub fn lift_state(&self, x: &[T]) -> Result<Vec<T>> {
        let kx = self.sys.data.k.mul_vec(x);
        let n = self.sys.n_samples();
        let rep: Vec<T> = (0..n).flat_map(|_| kx.iter().copied()).collect();
        try_map_blocks(&rep, self.sys.data.nh, |i, b| self.sys.exact_stiffness_solve(i, b))
    }

    /// `E_yᵀ v = K Σ_i A_i⁻¹ v_i`.
    pub fn restrict_state(&self, v: &[T]) -> Result<Vec<T>> {
        let s = try_map_blocks(v, self.sys.data.nh, |i, b| self.sys.exact_stiffness_solve(i, b))?;
        let ones = vec![T::one(); self.sys.n_samples()];
        Ok(self.sys.data.k.mul_vec(&weighted_block_sum(&s, self.sys.data.nh, &ones)))
    }

    /// `E x` as a full block vector.
    pub fn lift(&self, x: &[T]) -> Result<BlockVector<T>> {
        let nh = self.sys.data.nh;
        if x.len() != 3 * nh {
            return Err(Error::dim("reduced vector", 3 * nh, x.len()));
        }
        Ok(BlockVector {
            y: self.lift_state(&x[..nh])?,
            u: x[nh..2 * nh].to_vec(),
            p: self.lift_state(&x[2 * nh..])?,
        })
    }

    /// `Eᵀ v`.
    pub fn restrict(&self, v: &BlockVector<T>) -> Result<Vec<T>> {
        let mut out = self.restrict_state(&v.y)?;
        out.extend_from_slice(&v.u);
        out.extend(self.restrict_state(&v.p)?);
        Ok(out)
    }

    /// `Eᵀ𝒮E x`.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        let ex = self.lift(x)?;
        self.restrict(&self.sys.apply_saddle(&ex)?)
    }

    /// Reduced right-hand side `Eᵀ b`.
    pub fn rhs(&self) -> Result<Vec<T>> {
        self.restrict(&self.sys.data.rhs)
    }

    /// Dense `𝒮_OP`.
    pub fn dense(&self, cap: usize) -> Result<DMatrix<T>> {
        dense_from_operator(self.dim(), cap, "reduced operator", |x| self.apply(x))
    }
}

#[cfg(test)]
mod tests;
