//! Chebyshev semi-iteration for a preconditioned stationary method and the
//! power method that calibrates it.

use std::convert::Infallible;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::vector::{axpy, dot, norm, scale};
use crate::{Error, Real, Result};

/// Parameters of `v ← v + α P₀⁻¹(z − L v)` accelerated on the eigenvalue
/// interval `[λ̲, λ̄]` of `I − α P₀⁻¹ L`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChebParams<T> {
    pub alpha: T,
    pub lambda_lo: T,
    pub lambda_hi: T,
    pub k_it: usize,
}

impl<T: Real> ChebParams<T> {
    pub fn new(alpha: T, lambda_lo: T, lambda_hi: T, k_it: usize) -> Result<Self> {
        if k_it == 0 {
            return Err(Error::InvalidParameter("Chebyshev needs k_it ≥ 1".into()));
        }
        if !(alpha > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "Chebyshev damping must be positive, got {alpha}"
            )));
        }
        if !(-T::one() < lambda_lo && lambda_lo <= lambda_hi && lambda_hi < T::one()) {
            return Err(Error::InvalidParameter(format!(
                "Chebyshev interval [{lambda_lo}, {lambda_hi}] must lie inside (-1, 1)"
            )));
        }
        Ok(ChebParams {
            alpha,
            lambda_lo,
            lambda_hi,
            k_it,
        })
    }

    /// Parameters for a preconditioned operator whose spectrum lies in
    /// `[1, λ_max]`: `α = 1/(1+λ_max)`, `λ̲ = 1 − αλ_max`, `λ̄ = 1 − α`.
    pub fn from_lambda_max(lambda_max: T, k_it: usize) -> Result<Self> {
        if !(lambda_max >= T::one()) {
            return Err(Error::InvalidParameter(format!(
                "λ_max estimate {lambda_max} is below 1"
            )));
        }
        let alpha = T::one() / (T::one() + lambda_max);
        Self::new(alpha, T::one() - alpha * lambda_max, T::one() - alpha, k_it)
    }

    /// Parameters for a preconditioned operator whose spectrum lies in `[lo, hi]`, `0 < lo ≤ hi`.
    pub fn from_bounds(lo: T, hi: T, k_it: usize) -> Result<Self> {
        if !(T::zero() < lo && lo <= hi) {
            return Err(Error::InvalidParameter(format!(
                "spectral bounds [{lo}, {hi}] must be positive and ordered"
            )));
        }
        let alpha = T::one() / hi;
        Self::new(alpha, T::zero(), T::one() - alpha * lo, k_it)
    }
}

/// Runs exactly `k_it` Chebyshev-accelerated steps for `L v = z` from `v⁰ = 0`.
///
/// The result is a fixed polynomial in `P₀⁻¹L` applied to `P₀⁻¹z`, hence
/// linear in `rhs`. Uses `k_it` preconditioner applies and `k_it − 1`
/// operator applies.
pub fn chebyshev_semi_iteration<T: Real>(
    op: impl Fn(&[T]) -> Vec<T>,
    pre: impl Fn(&[T]) -> Vec<T>,
    rhs: &[T],
    params: &ChebParams<T>,
) -> Vec<T> {
    let Ok(v) = try_chebyshev_semi_iteration::<T, Infallible>(|x| Ok(op(x)), |x| Ok(pre(x)), rhs, params);
    v
}

/// [`chebyshev_semi_iteration`] with fallible operator and preconditioner.
pub fn try_chebyshev_semi_iteration<T: Real, E>(
    mut op: impl FnMut(&[T]) -> Result<Vec<T>, E>,
    mut pre: impl FnMut(&[T]) -> Result<Vec<T>, E>,
    rhs: &[T],
    params: &ChebParams<T>,
) -> Result<Vec<T>, E> {
    let two = T::lit(2.0);
    // Eigenvalues of B = αP₀⁻¹L lie in [1 − λ̄, 1 − λ̲], centre θ, half-width δ.
    let theta = T::one() - (params.lambda_lo + params.lambda_hi) / two;
    let delta = (params.lambda_hi - params.lambda_lo) / two;
    let s = delta / theta;

    let mut r = pre(rhs)?;
    scale(params.alpha, &mut r);
    let mut d = r.clone();
    scale(T::one() / theta, &mut d);
    let mut x = vec![T::zero(); rhs.len()];
    let mut rho = s;
    for k in 0..params.k_it {
        axpy(T::one(), &d, &mut x);
        if k + 1 == params.k_it {
            break;
        }
        let mut bd = pre(&op(&d)?)?;
        scale(params.alpha, &mut bd);
        axpy(-T::one(), &bd, &mut r);
        let denom = two - s * rho;
        let rho_next = s / denom;
        let c = two / (denom * theta);
        for (di, &ri) in d.iter_mut().zip(&r) {
            *di = rho_next * rho * *di + c * ri;
        }
        rho = rho_next;
    }
    Ok(x)
}

/// Power-method estimate of the dominant eigenvalue of `P₀⁻¹L`.
///
/// Starts from the all-ones vector plus a seeded perturbation of size 1e-3
/// and returns the Rayleigh quotient of the last iterate.
pub fn estimate_lambda_max<T: Real>(
    op: impl Fn(&[T]) -> Vec<T>,
    pre: impl Fn(&[T]) -> Vec<T>,
    dim: usize,
    iters: usize,
    seed: u64,
) -> Result<T> {
    try_estimate_lambda_max(|x| Ok(op(x)), |x| Ok(pre(x)), dim, iters, seed)
}

/// [`estimate_lambda_max`] with fallible operator and preconditioner.
pub fn try_estimate_lambda_max<T: Real>(
    mut op: impl FnMut(&[T]) -> Result<Vec<T>>,
    mut pre: impl FnMut(&[T]) -> Result<Vec<T>>,
    dim: usize,
    iters: usize,
    seed: u64,
) -> Result<T> {
    if iters == 0 || dim == 0 {
        return Err(Error::InvalidParameter(
            "power method needs at least one iteration and a nonempty space".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<T> = (0..dim)
        .map(|_| T::one() + T::lit(1e-3 * rng.random_range(-1.0..1.0)))
        .collect();
    let nx = norm(&x);
    scale(T::one() / nx, &mut x);
    let mut lambda = T::zero();
    for _ in 0..iters {
        let y = pre(&op(&x)?)?;
        lambda = dot(&x, &y);
        let ny = norm(&y);
        if ny == T::zero() {
            break;
        }
        x = y;
        scale(T::one() / ny, &mut x);
    }
    Ok(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::{prop_assert, proptest};

    fn dense_op(a: &DMatrix<f64>) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
        move |x| (a * DVector::from_column_slice(x)).iter().copied().collect()
    }

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n) * (n as f64)
    }

    /// Golub–Varga three-term form of the same semi-iteration.
    fn golub_varga(a: &DMatrix<f64>, pinv: &DMatrix<f64>, z: &DVector<f64>, p: &ChebParams<f64>) -> DVector<f64> {
        let n = z.len();
        let g = DMatrix::identity(n, n) - pinv * a * p.alpha;
        let c = pinv * z * p.alpha;
        let (lo, hi) = (p.lambda_lo, p.lambda_hi);
        let gamma = 2.0 / (2.0 - lo - hi);
        let mu = (hi - lo) / (2.0 - lo - hi);
        let mut x_prev = DVector::zeros(n);
        let mut x = (&g * &x_prev + &c) * gamma + &x_prev * (1.0 - gamma);
        let mut omega = 1.0;
        for k in 1..p.k_it {
            omega = if k == 1 {
                1.0 / (1.0 - mu * mu / 2.0)
            } else {
                1.0 / (1.0 - mu * mu * omega / 4.0)
            };
            let x_next = ((&g * &x + &c) * gamma + &x * (1.0 - gamma) - &x_prev) * omega + &x_prev;
            x_prev = x;
            x = x_next;
        }
        x
    }

    #[test]
    fn identity_single_step_is_a_scalar_multiple() {
        let p = ChebParams::new(0.5, 0.5, 0.5, 1).unwrap();
        let r = vec![1.0, -2.0, 3.0];
        let out = chebyshev_semi_iteration(|x: &[f64]| x.to_vec(), |x: &[f64]| x.to_vec(), &r, &p);
        let c = out[0] / r[0];
        for (o, ri) in out.iter().zip(&r) {
            assert!((o - c * ri).abs() < 1e-15);
        }
        assert!((c - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_three_term_recursion_and_converges() {
        let a = spd(9, 1);
        let d = DMatrix::from_diagonal(&a.diagonal());
        let dinv = d.clone().try_inverse().unwrap();
        let ev = crate::linalg::generalized_symmetric_eigen(&a, &d).unwrap().0;
        let (lmin, lmax) = (ev[0], ev[8]);
        let alpha = 1.0 / lmax;
        let p = ChebParams::new(alpha, 1.0 - alpha * lmax, 1.0 - alpha * lmin, 12).unwrap();
        let z = DVector::from_fn(9, |i, _| (i as f64 + 1.0).cos());
        let exact = a.clone().cholesky().unwrap().solve(&z);
        let ours = chebyshev_semi_iteration(dense_op(&a), dense_op(&dinv), z.as_slice(), &p);
        let oracle = golub_varga(&a, &dinv, &z, &p);
        for i in 0..9 {
            assert!((ours[i] - oracle[i]).abs() < 1e-12 * oracle.amax());
        }
        for k in 1..=p.k_it {
            let pk = ChebParams { k_it: k, ..p };
            let v = DVector::from_vec(chebyshev_semi_iteration(dense_op(&a), dense_op(&dinv), z.as_slice(), &pk));
            // Error in the A-norm against the Chebyshev bound 2 q^k/(1+q^{2k}).
            let kappa = lmax / lmin;
            let q = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);
            let bound = 2.0 * q.powi(k as i32) / (1.0 + q.powi(2 * k as i32));
            let e = &v - &exact;
            let ea = (e.transpose() * &a * &e)[0].sqrt();
            let e0 = (exact.transpose() * &a * &exact)[0].sqrt();
            assert!(ea <= bound * e0 * (1.0 + 1e-10), "k={k}");
        }
    }

    #[test]
    fn degenerate_interval() {
        // λ̲ = λ̄: the single-point interval, exact when P₀ = L.
        let a = spd(5, 3);
        let ainv = a.clone().try_inverse().unwrap();
        let p = ChebParams::from_lambda_max(1.0, 4).unwrap();
        assert_eq!((p.alpha, p.lambda_lo, p.lambda_hi), (0.5, 0.5, 0.5));
        let z = DVector::from_element(5, 1.0);
        let v = chebyshev_semi_iteration(dense_op(&a), dense_op(&ainv), z.as_slice(), &p);
        let exact = &ainv * &z;
        for i in 0..5 {
            assert!((v[i] - exact[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(ChebParams::new(0.5, -1.0, 0.5, 3).is_err());
        assert!(ChebParams::new(0.5, 0.1, 1.0, 3).is_err());
        assert!(ChebParams::new(0.5, 0.6, 0.5, 3).is_err());
        assert!(ChebParams::new(0.5, 0.1, 0.5, 0).is_err());
        let p = ChebParams::from_lambda_max(3.0f64, 2).unwrap();
        assert!((p.alpha - 0.25).abs() < 1e-15);
        assert!((p.lambda_lo - 0.25).abs() < 1e-15);
        assert!((p.lambda_hi - 0.75).abs() < 1e-15);
    }

    #[test]
    fn power_method() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 4.0]));
        let id = |x: &[f64]| x.to_vec();
        let l = estimate_lambda_max(dense_op(&d), id, 3, 50, 0).unwrap();
        assert!((l - 4.0).abs() < 1e-6);
        let a = spd(6, 2);
        let ainv = a.clone().try_inverse().unwrap();
        let l = estimate_lambda_max(dense_op(&a), dense_op(&ainv), 6, 5, 0).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        let p = ChebParams::from_lambda_max(l, 1).unwrap();
        assert!((p.alpha - 0.5).abs() < 1e-12);
        let da = DMatrix::from_diagonal(&a.diagonal()).try_inverse().unwrap();
        let l = estimate_lambda_max(dense_op(&a), dense_op(&da), 6, 20, 9).unwrap();
        let ev = crate::linalg::generalized_symmetric_eigen(&a, &DMatrix::from_diagonal(&a.diagonal())).unwrap().0;
        assert!((l - ev[5]).abs() / ev[5] < 0.05);
    }

    proptest! {
        #[test]
        fn superposition(a_coef in -3.0f64..3.0, b_coef in -3.0f64..3.0, k in 1usize..15, seed in 0u64..50) {
            let a = spd(7, seed);
            let dinv = DMatrix::from_diagonal(&a.diagonal()).try_inverse().unwrap();
            let p = ChebParams::from_lambda_max(6.0, k).unwrap();
            let r1: Vec<f64> = (0..7).map(|i| (i as f64 * 0.7 + seed as f64).sin()).collect();
            let r2: Vec<f64> = (0..7).map(|i| (i as f64 * 1.3 - seed as f64).cos()).collect();
            let comb: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| a_coef * x + b_coef * y).collect();
            let c = chebyshev_semi_iteration(dense_op(&a), dense_op(&dinv), &comb, &p);
            let c1 = chebyshev_semi_iteration(dense_op(&a), dense_op(&dinv), &r1, &p);
            let c2 = chebyshev_semi_iteration(dense_op(&a), dense_op(&dinv), &r2, &p);
            let scale_ = c.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            for i in 0..7 {
                prop_assert!((c[i] - a_coef * c1[i] - b_coef * c2[i]).abs() < 1e-12 * scale_);
            }
        }
    }
}
