//! Cholesky factorization of symmetric positive definite band matrices.

use crate::linalg::CsrMatrix;
use crate::{Error, Real, Result};

/// Lower-triangular band factor `L` with `A = L Lᵀ`.
///
/// Row `i` of `L` is stored densely over columns `i - bw ..= i`.
#[derive(Clone, Debug)]
pub struct BandCholesky<T> {
    n: usize,
    bw: usize,
    data: Vec<T>,
}

impl<T: Real> BandCholesky<T> {
    /// Factors a symmetric positive definite matrix; only the lower band is read.
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dim("band Cholesky", a.nrows(), a.ncols()));
        }
        let n = a.nrows();
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut data = vec![T::zero(); n * w];
        for (r, c, v) in a.triplets() {
            if c <= r {
                data[r * w + (c + bw - r)] = v;
            }
        }
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let mut s = data[i * w + (j + bw - i)];
                for k in lo..j {
                    s -= data[i * w + (k + bw - i)] * data[j * w + (k + bw - j)];
                }
                if j == i {
                    if s <= T::zero() || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite {
                            row: i,
                            pivot: s.as_f64(),
                        });
                    }
                    data[i * w + bw] = s.sqrt();
                } else {
                    data[i * w + (j + bw - i)] = s / data[j * w + bw];
                }
            }
        }
        Ok(BandCholesky { n, bw, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn l(&self, i: usize, j: usize) -> T {
        self.data[i * (self.bw + 1) + (j + self.bw - i)]
    }

    /// Overwrites `b` with `A⁻¹ b`.
    pub fn solve_in_place(&self, b: &mut [T]) {
        assert_eq!(b.len(), self.n, "band Cholesky solve: rhs length");
        for i in 0..self.n {
            let mut s = b[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.l(i, k) * b[k];
            }
            b[i] = s / self.l(i, i);
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + self.bw + 1).min(self.n) {
                s -= self.l(k, i) * b[k];
            }
            b[i] = s / self.l(i, i);
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tridiag(n: usize) -> CsrMatrix<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + i as f64 * 0.1));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn solves_tridiagonal() {
        let a = tridiag(12);
        let f = BandCholesky::factor(&a).unwrap();
        assert_eq!(f.bandwidth(), 1);
        let x: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let b = a.mul_vec(&x);
        let y = f.solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(
            BandCholesky::factor(&a),
            Err(Error::NotPositiveDefinite { row: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn matches_dense_cholesky(n in 2usize..20, bw in 1usize..5, seed in 0u64..1000) {
            let mut trips = Vec::new();
            let mut s = seed;
            let mut rnd = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); ((s >> 33) as f64) / (1u64 << 31) as f64 - 0.5 };
            for i in 0..n {
                for j in i.saturating_sub(bw)..i {
                    let v = rnd();
                    trips.push((i, j, v));
                    trips.push((j, i, v));
                }
                trips.push((i, i, 2.0 * bw as f64 + 1.0));
            }
            let a = CsrMatrix::from_triplets(n, n, &trips);
            let f = BandCholesky::factor(&a).unwrap();
            let b: Vec<f64> = (0..n).map(|_| rnd()).collect();
            let x = f.solve(&b);
            let dense = a.to_dense().cholesky().unwrap();
            let xd = dense.solve(&nalgebra::DVector::from_vec(b));
            for i in 0..n {
                prop_assert!((x[i] - xd[i]).abs() < 1e-12);
            }
        }
    }
}
