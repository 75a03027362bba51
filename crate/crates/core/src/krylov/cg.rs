use std::time::Instant;

use super::SolveReport;
use crate::vector::{axpy, dot, norm};
use crate::{Error, Real, Result};

/// Preconditioned conjugate gradients from `x⁰ = 0`.
///
/// Stops once the recurrence residual satisfies `‖r‖ ≤ tol·‖b‖`. A run that
/// hits `maxit` returns its last iterate with `converged = false`.
pub fn cg<T: Real>(
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
    let mut r = rhs.to_vec();
    let mut z = pre(&r)?;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=maxit {
        let ap = op(&p)?;
        if ap.len() != n {
            return Err(Error::dim("CG operator", n, ap.len()));
        }
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "CG operator is not positive definite (pᵀAp = {pap})"
            )));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rel = norm(&r) / bnorm;
        report.iterations = it;
        report.residual_history.push(rel.as_f64());
        if rel <= tol {
            report.converged = true;
            break;
        }
        z = pre(&r)?;
        let rz_new = dot(&r, &z);
        let b = rz_new / rz;
        rz = rz_new;
        for (pi, &zi) in p.iter_mut().zip(&z) {
            *pi = zi + b * *pi;
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((x, report))
}
