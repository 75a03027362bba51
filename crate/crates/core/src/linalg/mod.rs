//! Sparse storage, band factorization, and dense helpers for oracle-scale work.

mod banded;
mod sparse;

pub use banded::BandCholesky;
pub use sparse::{read_matrix_market, write_dense_matrix_market, CsrMatrix};

use nalgebra::{DMatrix, DVector};

use crate::{Error, Real, Result};

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues<T: Real>(a: DMatrix<T>) -> Vec<T> {
    let mut ev: Vec<T> = a.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalue"));
    ev
}

/// Lower Cholesky factor of a dense symmetric positive definite matrix.
pub fn dense_cholesky<T: Real>(a: DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    a.cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite {
            row: n,
            pivot: f64::NAN,
        })
}

/// Eigenpairs of the symmetric-definite pencil `A v = λ B v`, eigenvalues ascending,
/// eigenvectors `B`-orthonormal (columns).
pub fn generalized_symmetric_eigen<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
) -> Result<(Vec<T>, DMatrix<T>)> {
    let l = dense_cholesky(b.clone())?;
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("singular Cholesky factor".into()))?;
    let mut c = &linv * a * linv.transpose();
    c = (&c + c.transpose()) * T::lit(0.5);
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .expect("finite eigenvalue")
    });
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let w = linv.transpose() * eig.eigenvectors;
    let mut vecs = DMatrix::zeros(w.nrows(), w.ncols());
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &w.column(i));
    }
    Ok((vals, vecs))
}

pub fn to_dvector<T: Real>(v: &[T]) -> DVector<T> {
    DVector::from_column_slice(v)
}
