use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::SpectrumReport;
use crate::linalg::{dense_cholesky, symmetric_eigenvalues};
use crate::precond::Preconditioner;
use crate::saddle::{dense_from_operator, ControlSpace, ReducedSystem, SaddleSystem};
use crate::vector::{axpy, dot, scale};
use crate::{Error, Real, Result};

/// Largest dense problem the spectral oracles will factor.
pub const DEFAULT_DENSE_CAP: usize = 6000;

/// Distance from 1 below which an eigenvalue counts as a unit eigenvalue.
pub const NEAR_ONE_TOL: f64 = 1e-8;

fn check_square<T: Real>(m: &DMatrix<T>, n: usize, what: &'static str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::dim(what, n, m.nrows().max(m.ncols())));
    }
    Ok(())
}

fn is_symmetric<T: Real>(m: &DMatrix<T>) -> bool {
    let scale = m.amax();
    (m - m.transpose()).amax() <= T::lit(1e-10) * scale
}

fn symmetric_report<T: Real>(c: DMatrix<T>) -> SpectrumReport {
    let sym = (&c + c.transpose()) * T::lit(0.5);
    let ev: Vec<f64> = symmetric_eigenvalues(sym).into_iter().map(|v| v.as_f64()).collect();
    let moduli: Vec<f64> = ev.iter().map(|v| v.abs()).collect();
    SpectrumReport::from_values(ev, 0.0, &moduli)
}

/// Nonsymmetric eigensolve in f64 through faer's Hessenberg QR.
fn general_report<T: Real>(c: DMatrix<T>) -> Result<SpectrumReport> {
    let m = faer::Mat::<f64>::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)].as_f64());
    let ev = m
        .eigenvalues()
        .map_err(|e| Error::InvalidParameter(format!("nonsymmetric eigensolve failed: {e:?}")))?;
    let real: Vec<f64> = ev.iter().map(|z| z.re).collect();
    let moduli: Vec<f64> = ev.iter().map(|z| z.re.hypot(z.im)).collect();
    let max_imag = ev.iter().fold(0.0, |m: f64, z| m.max(z.im.abs()));
    Ok(SpectrumReport::from_values(real, max_imag, &moduli))
}

/// Full spectrum of `B⁻¹A`.
///
/// Symmetric `A` with symmetric positive definite `B` goes through the
/// Cholesky reduction `L⁻¹AL⁻ᵀ`; anything else through a general eigensolve.
pub fn dense_spectrum<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, cap: usize) -> Result<SpectrumReport> {
    let n = a.nrows();
    if n > cap {
        return Err(Error::SizeCapExceeded {
            what: "dense spectrum",
            size: n,
            cap,
        });
    }
    check_square(a, n, "dense spectrum (A)")?;
    check_square(b, n, "dense spectrum (B)")?;
    if is_symmetric(a) && is_symmetric(b) {
        if let Ok(l) = dense_cholesky(b.clone()) {
            if let Some(linv) = l.try_inverse() {
                return Ok(symmetric_report(&linv * a * linv.transpose()));
            }
        }
    }
    let binv_a = b
        .clone()
        .lu()
        .solve(a)
        .ok_or_else(|| Error::InvalidParameter("dense spectrum: B is singular".into()))?;
    general_report(binv_a)
}

/// Full spectrum of `B⁻¹A` given `B⁻¹` explicitly (e.g. a dense preconditioner apply).
pub fn dense_spectrum_with_inverse<T: Real>(
    a: &DMatrix<T>,
    binv: &DMatrix<T>,
    cap: usize,
) -> Result<SpectrumReport> {
    let n = a.nrows();
    if n > cap {
        return Err(Error::SizeCapExceeded {
            what: "dense spectrum",
            size: n,
            cap,
        });
    }
    check_square(a, n, "dense spectrum (A)")?;
    check_square(binv, n, "dense spectrum (B⁻¹)")?;
    if is_symmetric(a) && is_symmetric(binv) {
        if let Ok(l) = dense_cholesky(binv.clone()) {
            return Ok(symmetric_report(l.transpose() * a * &l));
        }
    }
    general_report(binv * a)
}

/// Eigenvalues `μ_j` (ascending) of `E[K²] + γ(E[K²] − E[K]²)` with `K_i = A_i⁻¹M_s`,
/// the expectation taken with the collocation weights.
///
/// Computed as the spectrum of `GM_s` with
/// `G = (1+γ)Σζ_iA_i⁻¹M_sA_i⁻¹ − γ(Σζ_iA_i⁻¹)M_s(Σζ_iA_i⁻¹)`, symmetrized
/// through the Cholesky factor of `M_s`.
pub fn reduced_spectrum<T: Real>(sys: &SaddleSystem<T>, cap: usize) -> Result<Vec<T>> {
    let nh = sys.nh();
    if nh > cap {
        return Err(Error::SizeCapExceeded {
            what: "reduced spectrum",
            size: nh,
            cap,
        });
    }
    let factors = sys.stiffness_factors()?;
    let m = sys.mass().to_dense();
    let parts: Vec<(DMatrix<T>, DMatrix<T>)> = factors
        .par_iter()
        .zip(sys.zeta().par_iter())
        .map(|(f, &z)| {
            let mut inv = DMatrix::<T>::zeros(nh, nh);
            let mut e = vec![T::zero(); nh];
            for j in 0..nh {
                e[j] = T::one();
                let col = f.solve(&e);
                inv.set_column(j, &nalgebra::DVector::from_vec(col));
                e[j] = T::zero();
            }
            let quad = &inv * &m * &inv * z;
            (inv * z, quad)
        })
        .collect();
    let mut e0 = DMatrix::<T>::zeros(nh, nh);
    let mut e1 = DMatrix::<T>::zeros(nh, nh);
    for (lin, quad) in &parts {
        e0 += lin;
        e1 += quad;
    }
    let g = sys.gamma();
    let gmat = e1 * (T::one() + g) - &e0 * &m * &e0 * g;
    let l = dense_cholesky(m)?;
    let c = l.transpose() * gmat * &l;
    Ok(symmetric_eigenvalues((&c + c.transpose()) * T::lit(0.5)))
}

/// Extremal eigenvalues of `P⁻¹A` by Lanczos with full reorthogonalization.
///
/// `a` must be symmetric and `pinv` symmetric positive definite; the
/// recurrence runs on `P^{-1/2}AP^{-1/2}` using only applies of `a` and
/// `pinv`. Stops early with `breakdown = true` on an invariant subspace.
/// Smallest-modulus Ritz values of indefinite operators converge slowly and
/// are reported as computed.
pub fn lanczos_extremal<T: Real>(
    mut a: impl FnMut(&[T]) -> Result<Vec<T>>,
    mut pinv: impl FnMut(&[T]) -> Result<Vec<T>>,
    dim: usize,
    iters: usize,
    seed: u64,
) -> Result<SpectrumReport> {
    if dim == 0 || iters == 0 {
        return Err(Error::InvalidParameter(
            "Lanczos needs a nonempty space and at least one step".into(),
        ));
    }
    let iters = iters.min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: Vec<T> = (0..dim).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect();
    let mut z = pinv(&w)?;
    let mut bsq = dot(&w, &z);
    if !(bsq > T::zero()) {
        return Err(Error::InvalidParameter("Lanczos preconditioner is not positive definite".into()));
    }
    let mut vs: Vec<Vec<T>> = Vec::with_capacity(iters);
    let mut zs: Vec<Vec<T>> = Vec::with_capacity(iters);
    let mut alphas: Vec<T> = Vec::with_capacity(iters);
    let mut betas: Vec<T> = Vec::with_capacity(iters);
    let mut breakdown = false;
    let mut scale_est = T::zero();
    loop {
        let b = bsq.sqrt();
        scale(T::one() / b, &mut w);
        scale(T::one() / b, &mut z);
        vs.push(w);
        zs.push(z);
        let j = vs.len() - 1;
        let mut next = a(&zs[j])?;
        if next.len() != dim {
            return Err(Error::dim("Lanczos operator", dim, next.len()));
        }
        let alpha = dot(&zs[j], &next);
        alphas.push(alpha);
        scale_est = scale_est.max(alpha.abs()).max(betas.last().copied().unwrap_or(T::zero()));
        for _ in 0..2 {
            for k in 0..=j {
                let c = dot(&zs[k], &next);
                axpy(-c, &vs[k], &mut next);
            }
        }
        if vs.len() == iters {
            break;
        }
        w = next;
        z = pinv(&w)?;
        bsq = dot(&w, &z);
        let tiny = T::lit(1e-12) * scale_est.max(T::eps());
        if !(bsq > tiny * tiny) {
            breakdown = true;
            break;
        }
        betas.push(bsq.sqrt());
    }
    let k = alphas.len();
    let mut t = DMatrix::<T>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let ritz: Vec<f64> = symmetric_eigenvalues(t).into_iter().map(|v| v.as_f64()).collect();
    let moduli: Vec<f64> = ritz.iter().map(|v| v.abs()).collect();
    let mut report = SpectrumReport::from_values(ritz, 0.0, &moduli);
    report.eigenvalues = None;
    report.near_one = 0;
    report.iterations = k;
    report.breakdown = breakdown;
    Ok(report)
}

/// How extremal eigenvalues of a preconditioned operator are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumMethod {
    /// Full dense eigensolve, refused above `cap` unknowns.
    Dense { cap: usize },
    /// Lanczos extremal estimates.
    Lanczos { iters: usize, seed: u64 },
}

/// `σ(S̃⁻¹S) = {1} ∪ {1 + μ_j/β}` from [`reduced_spectrum`]; L² control only.
pub fn tilde_schur_spectrum<T: Real>(sys: &SaddleSystem<T>, cap: usize) -> Result<SpectrumReport> {
    if sys.control() != ControlSpace::L2 {
        return Err(Error::ControlSpaceMismatch { required: "L2" });
    }
    let beta = sys.beta().as_f64();
    let mut ev: Vec<f64> = reduced_spectrum(sys, cap)?
        .into_iter()
        .map(|m| 1.0 + m.as_f64() / beta)
        .collect();
    ev.extend(std::iter::repeat_n(1.0, (sys.n_samples() - 1) * sys.nh()));
    let moduli: Vec<f64> = ev.iter().map(|v| v.abs()).collect();
    Ok(SpectrumReport::from_values(ev, 0.0, &moduli))
}

/// `σ(Ŝ⁻¹S)` for the Schur approximation `Ŝ` of a full-system preconditioner.
pub fn schur_spectrum<T: Real>(pc: &Preconditioner<T>, method: SpectrumMethod) -> Result<SpectrumReport> {
    if pc.kind().is_operator() {
        return Err(Error::ControlSpaceMismatch { required: "L2" });
    }
    let sys = pc.system();
    let n = sys.n_samples() * sys.nh();
    match method {
        SpectrumMethod::Dense { cap } => {
            let s = sys.dense_schur(cap)?;
            let sinv = dense_from_operator(n, cap, "Schur preconditioner", |v| pc.schur_inverse(v))?;
            dense_spectrum_with_inverse(&s, &sinv, cap)
        }
        SpectrumMethod::Lanczos { iters, seed } => {
            lanczos_extremal(|v| sys.apply_schur(v), |v| pc.schur_inverse(v), n, iters, seed)
        }
    }
}

/// `σ(P⁻¹𝒮)` of a full-system preconditioner, dense.
pub fn saddle_spectrum<T: Real>(pc: &Preconditioner<T>, cap: usize) -> Result<SpectrumReport> {
    if pc.kind().is_operator() {
        return Err(Error::ControlSpaceMismatch { required: "L2" });
    }
    dense_spectrum_with_inverse(&pc.system().dense_saddle(cap)?, &pc.dense(cap)?, cap)
}

/// `σ(P_OP⁻¹𝒮_OP)` on the reduced `3N_h` space, dense.
pub fn operator_spectrum<T: Real>(pc: &Preconditioner<T>, cap: usize) -> Result<SpectrumReport> {
    if !pc.kind().is_operator() {
        return Err(Error::ControlSpaceMismatch { required: "H1" });
    }
    let red = ReducedSystem::new(pc.system())?;
    dense_spectrum_with_inverse(&red.dense(cap)?, &pc.dense(cap)?, cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::identity;
    use crate::testutil::random_vec;
    use nalgebra::DVector;

    #[test]
    fn equal_pencil_gives_unit_spectrum() {
        let g = DMatrix::from_vec(6, 6, random_vec(36, 1));
        let b = &g * g.transpose() + DMatrix::identity(6, 6);
        let rep = dense_spectrum(&b, &b, 100).unwrap();
        assert_eq!(rep.near_one, 6);
        assert!((rep.lambda_min - 1.0).abs() < 1e-10 && (rep.lambda_max - 1.0).abs() < 1e-10);
    }

    #[test]
    fn diagonal_against_identity() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let rep = dense_spectrum(&a, &DMatrix::identity(3, 3), 10).unwrap();
        assert!((rep.lambda_min - 1.0).abs() < 1e-14);
        assert!((rep.lambda_max - 3.0).abs() < 1e-14);
        assert_eq!(rep.near_one, 1);
    }

    #[test]
    fn nonsymmetric_pair_uses_general_solver() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let rep = dense_spectrum(&a, &DMatrix::identity(2, 2), 10).unwrap();
        assert!((rep.max_imag - 1.0).abs() < 1e-12);
        assert!(rep.lambda_max.abs() < 1e-12);
        assert!((rep.abs_min - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_form_agrees_with_pencil_form() {
        let g = DMatrix::from_vec(8, 8, random_vec(64, 2));
        let a = &g + g.transpose();
        let h = DMatrix::from_vec(8, 8, random_vec(64, 3));
        let b = &h * h.transpose() + DMatrix::identity(8, 8);
        let p = dense_spectrum(&a, &b, 100).unwrap();
        let q = dense_spectrum_with_inverse(&a, &b.clone().try_inverse().unwrap(), 100).unwrap();
        let (pe, qe) = (p.eigenvalues.unwrap(), q.eigenvalues.unwrap());
        for (x, y) in pe.iter().zip(&qe) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let a = DMatrix::<f64>::identity(5, 5);
        assert!(matches!(
            dense_spectrum(&a, &a, 4),
            Err(Error::SizeCapExceeded { size: 5, cap: 4, .. })
        ));
    }

    #[test]
    fn lanczos_on_diagonal_one_to_hundred() {
        let d: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let rep = lanczos_extremal(
            |v: &[f64]| Ok(v.iter().zip(&d).map(|(x, y)| x * y).collect()),
            identity,
            100,
            60,
            7,
        )
        .unwrap();
        assert!((rep.lambda_min - 1.0).abs() < 1e-6, "{}", rep.lambda_min);
        assert!((rep.lambda_max - 100.0).abs() < 1e-6, "{}", rep.lambda_max);
    }

    #[test]
    fn lanczos_identity_breaks_down_at_one() {
        let rep = lanczos_extremal(|v: &[f64]| Ok(v.to_vec()), identity, 20, 10, 1).unwrap();
        assert!(rep.breakdown);
        assert_eq!(rep.iterations, 1);
        assert!((rep.lambda_min - 1.0).abs() < 1e-14 && (rep.lambda_max - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lanczos_with_preconditioner_matches_dense_pencil() {
        let n = 40;
        let g = DMatrix::from_vec(n, n, random_vec(n * n, 4));
        let a = &g + g.transpose();
        let h = DMatrix::from_vec(n, n, random_vec(n * n, 5));
        let b = &h * h.transpose() + DMatrix::identity(n, n);
        let binv = b.clone().try_inverse().unwrap();
        let dense = dense_spectrum(&a, &b, 100).unwrap();
        let rep = lanczos_extremal(
            |v| Ok((&a * DVector::from_column_slice(v)).as_slice().to_vec()),
            |v| Ok((&binv * DVector::from_column_slice(v)).as_slice().to_vec()),
            n,
            n,
            3,
        )
        .unwrap();
        assert!((rep.lambda_min - dense.lambda_min).abs() < 1e-8 * dense.abs_max);
        assert!((rep.lambda_max - dense.lambda_max).abs() < 1e-8 * dense.abs_max);
    }
}
