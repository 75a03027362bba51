use std::time::Instant;

use super::SolveReport;
use crate::vector::{axpy, dot, norm, sub};
use crate::{Error, Real, Result};

/// Explicit residual recomputation period.
const REFRESH: usize = 10;

/// Preconditioned MINRES from `x⁰ = 0` for symmetric `op` and SPD `pre ≈ op⁻¹`.
///
/// Convergence is judged on the unpreconditioned relative residual
/// `‖b − Ax‖/‖b‖`, tracked by recurrence, recomputed explicitly every
/// [`REFRESH`] iterations and confirmed explicitly before stopping. A run that
/// hits `maxit` returns its last iterate with `converged = false`.
pub fn minres<T: Real>(
    mut op: impl FnMut(&[T]) -> Result<Vec<T>>,
    mut pre: impl FnMut(&[T]) -> Result<Vec<T>>,
    rhs: &[T],
    tol: T,
    maxit: usize,
) -> Result<(Vec<T>, SolveReport)> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let start = Instant::now();
    let n = rhs.len();
    let mut x = vec![T::zero(); n];
    let bnorm = norm(rhs);
    let mut report = SolveReport {
        residual_history: vec![if bnorm > T::zero() { 1.0 } else { 0.0 }],
        ..SolveReport::default()
    };
    if bnorm == T::zero() {
        report.converged = true;
        report.wall_time = start.elapsed().as_secs_f64();
        return Ok((x, report));
    }

    let not_spd = |v: T| Error::InvalidParameter(format!("MINRES preconditioner is not positive definite (rᵀM⁻¹r = {v})"));
    let mut r1 = rhs.to_vec();
    let mut y = pre(&r1)?;
    let beta1_sq = dot(&r1, &y);
    if !(beta1_sq > T::zero()) {
        return Err(not_spd(beta1_sq));
    }
    let beta1 = beta1_sq.sqrt();
    let mut r2 = r1.clone();
    let (mut oldb, mut beta) = (T::zero(), beta1);
    let (mut dbar, mut epsln, mut phibar) = (T::zero(), T::zero(), beta1);
    let (mut cs, mut sn) = (-T::one(), T::zero());
    let mut w = vec![T::zero(); n];
    let mut w1 = vec![T::zero(); n];
    let mut w2 = vec![T::zero(); n];
    let mut aw = vec![T::zero(); n];
    let mut aw1 = vec![T::zero(); n];
    let mut aw2 = vec![T::zero(); n];
    let mut res = rhs.to_vec();

    for it in 1..=maxit {
        let s = T::one() / beta;
        let v: Vec<T> = y.iter().map(|&e| s * e).collect();
        let av = op(&v)?;
        if av.len() != n {
            return Err(Error::dim("MINRES operator", n, av.len()));
        }
        let mut next = av.clone();
        if it >= 2 {
            axpy(-beta / oldb, &r1, &mut next);
        }
        let alfa = dot(&v, &next);
        axpy(-alfa / beta, &r2, &mut next);
        r1 = std::mem::replace(&mut r2, next);
        y = pre(&r2)?;
        oldb = beta;
        let beta_sq = dot(&r2, &y);
        if beta_sq < T::zero() {
            return Err(not_spd(beta_sq));
        }
        beta = beta_sq.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(T::eps());
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar = sn * phibar;

        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        std::mem::swap(&mut aw1, &mut aw2);
        std::mem::swap(&mut aw2, &mut aw);
        let inv_gamma = T::one() / gamma;
        for k in 0..n {
            w[k] = (v[k] - oldeps * w1[k] - delta * w2[k]) * inv_gamma;
            aw[k] = (av[k] - oldeps * aw1[k] - delta * aw2[k]) * inv_gamma;
        }
        axpy(phi, &w, &mut x);
        axpy(-phi, &aw, &mut res);

        let mut rel = norm(&res) / bnorm;
        if it % REFRESH == 0 || rel <= tol || beta == T::zero() {
            res = sub(rhs, &op(&x)?);
            rel = norm(&res) / bnorm;
        }
        report.iterations = it;
        report.residual_history.push(rel.as_f64());
        if rel <= tol {
            report.converged = true;
            break;
        }
        if beta == T::zero() || !beta.is_finite() {
            break;
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::identity;
    use crate::testutil::random_vec;
    use nalgebra::{DMatrix, DVector};

    fn dense_op(a: &DMatrix<f64>) -> impl FnMut(&[f64]) -> Result<Vec<f64>> + '_ {
        move |x| Ok((a * DVector::from_column_slice(x)).as_slice().to_vec())
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let b = random_vec(7, 1);
        let (x, rep) = minres(|v| Ok(v.to_vec()), identity, &b, 1e-10, 10).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        assert!(crate::testutil::max_diff(&x, &b) < 1e-14);
    }

    #[test]
    fn matches_direct_solve_on_random_spd() {
        let g = DMatrix::from_vec(20, 20, random_vec(400, 5));
        let a = &g * g.transpose() + DMatrix::identity(20, 20);
        let b = random_vec(20, 6);
        let tol = 1e-10;
        let (x, rep) = minres(dense_op(&a), identity, &b, tol, 200).unwrap();
        assert!(rep.converged);
        let ev = a.clone().symmetric_eigenvalues();
        let cond = ev.max() / ev.min();
        let direct = a.clone().lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let err = (DVector::from_column_slice(&x) - &direct).norm() / direct.norm();
        assert!(err <= 10.0 * tol * cond, "error {err}, cond {cond}");
    }

    #[test]
    fn solves_symmetric_indefinite_with_spd_preconditioner() {
        let n = 30;
        let d: Vec<f64> = (0..n).map(|i| if i % 3 == 0 { -(1.0 + i as f64) } else { 2.0 + i as f64 }).collect();
        let g = DMatrix::from_vec(n, n, random_vec(n * n, 8)) * 0.05;
        let a = DMatrix::from_diagonal(&DVector::from_vec(d.clone())) + &g + g.transpose();
        let b = random_vec(n, 9);
        let tol = 1e-9;
        let (x, rep) = minres(
            dense_op(&a),
            |v| Ok(v.iter().zip(&d).map(|(e, di)| e / di.abs()).collect()),
            &b,
            tol,
            300,
        )
        .unwrap();
        assert!(rep.converged);
        let r = DVector::from_column_slice(&b) - &a * DVector::from_column_slice(&x);
        let rel = r.norm() / DVector::from_column_slice(&b).norm();
        assert!(rel <= tol, "explicit residual {rel}");
        assert!((rep.final_residual() - rel).abs() < 1e-12);
    }

    #[test]
    fn preconditioning_reduces_iterations() {
        let n = 60;
        let d: Vec<f64> = (0..n).map(|i| 10f64.powf(i as f64 / 10.0)).collect();
        let b = random_vec(n, 2);
        let op = |v: &[f64]| Ok(v.iter().zip(&d).map(|(e, di)| e * di).collect::<Vec<_>>());
        let (_, plain) = minres(op, identity, &b, 1e-8, 500).unwrap();
        let (_, jac) = minres(
            op,
            |v| Ok(v.iter().zip(&d).map(|(e, di)| e / di).collect()),
            &b,
            1e-8,
            500,
        )
        .unwrap();
        assert!(jac.converged && plain.converged);
        assert_eq!(jac.iterations, 1);
        assert!(plain.iterations > 10);
    }

    #[test]
    fn non_convergence_is_reported() {
        let d: Vec<f64> = (1..=40).map(|i| i as f64).collect();
        let b = random_vec(40, 4);
        let (_, rep) = minres(
            |v| Ok(v.iter().zip(&d).map(|(e, di)| e * di).collect()),
            identity,
            &b,
            1e-12,
            5,
        )
        .unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 5);
        assert_eq!(rep.residual_history.len(), 6);
        assert!(rep.ensure_converged().is_err());
    }

    #[test]
    fn rejects_indefinite_preconditioner() {
        let b = vec![1.0, 1.0];
        let r = minres(|v| Ok(v.to_vec()), |v| Ok(v.iter().map(|e| -e).collect()), &b, 1e-8, 5);
        assert!(r.is_err());
    }
}
