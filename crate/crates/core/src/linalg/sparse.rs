//! Compressed sparse row storage.

use std::io::Write;

use nalgebra::DMatrix;

use crate::{Error, Real, Result};

/// Real matrix in compressed sparse row layout with sorted, duplicate-free
/// column indices inside each row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![T::zero(); triplets.len()];
        for &(r, c, v) in triplets {
            let k = next[r];
            cols[k] = c;
            vals[k] = v;
            next[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, T)> = Vec::new();
        for r in 0..nrows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|&(c, _)| c);
            let mut iter = scratch.iter().copied();
            if let Some((mut c0, mut v0)) = iter.next() {
                for (c, v) in iter {
                    if c == c0 {
                        v0 += v;
                    } else {
                        col_idx.push(c0);
                        values.push(v0);
                        c0 = c;
                        v0 = v;
                    }
                }
                col_idx.push(c0);
                values.push(v0);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let trips: Vec<_> = (0..n).map(|i| (i, i, T::one())).collect();
        Self::from_triplets(n, n, &trips)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// Iterates `(col, value)` over the stored entries of `row`.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Iterates every stored `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[range.clone()].binary_search(&col) {
            Ok(k) => self.values[range.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x` into a caller-provided buffer.
    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols, "mul_vec: input length");
        assert_eq!(y.len(), self.nrows, "mul_vec: output length");
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yr = acc;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn checked_mul_vec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.ncols {
            return Err(Error::dim("sparse product", self.ncols, x.len()));
        }
        Ok(self.mul_vec(x))
    }

    pub fn scaled(&self, alpha: T) -> Self {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v *= alpha;
        }
        out
    }

    /// `sum_k c_k * A_k` over matrices of identical shape.
    pub fn linear_combination(terms: &[(T, &CsrMatrix<T>)]) -> Self {
        assert!(!terms.is_empty());
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        let mut trips = Vec::new();
        for &(c, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols), "shape mismatch");
            trips.extend(m.triplets().map(|(r, col, v)| (r, col, c * v)));
        }
        Self::from_triplets(nrows, ncols, &trips)
    }

    pub fn transpose(&self) -> Self {
        let trips: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &trips)
    }

    /// Largest `|a_ij - a_ji|` over the stored pattern.
    pub fn max_asymmetry(&self) -> T {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(T::zero(), |m, x| m.max(x))
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// Half bandwidth: `max |i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        self.triplets()
            .map(|(r, c, _)| r.abs_diff(c))
            .max()
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            d[(r, c)] = v;
        }
        d
    }

    /// Sparse matrix from a dense one, dropping exact zeros.
    pub fn from_dense(d: &DMatrix<T>) -> Self {
        let mut trips = Vec::new();
        for c in 0..d.ncols() {
            for r in 0..d.nrows() {
                let v = d[(r, c)];
                if v != T::zero() {
                    trips.push((r, c, v));
                }
            }
        }
        Self::from_triplets(d.nrows(), d.ncols(), &trips)
    }

    /// Writes the matrix in Matrix Market coordinate format (1-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(w, "{} {} {:.17e}", r + 1, c + 1, v.as_f64())?;
        }
        Ok(())
    }
}

/// Writes a dense matrix as Matrix Market coordinate data, skipping exact zeros.
pub fn write_dense_matrix_market<T: Real, W: Write>(d: &DMatrix<T>, w: W) -> Result<()> {
    CsrMatrix::from_dense(d).write_matrix_market(w)
}

/// Parses Matrix Market coordinate data (general or symmetric, real).
pub fn read_matrix_market<T: Real>(text: &str) -> Result<CsrMatrix<T>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty Matrix Market input".into()))?;
    if !header.starts_with("%%MatrixMarket matrix coordinate real") {
        return Err(Error::Parse(format!("unsupported header: {header}")));
    }
    let symmetric = header.contains("symmetric");
    let mut lines = lines.filter(|l| !l.starts_with('%') && !l.trim().is_empty());
    let size = lines
        .next()
        .ok_or_else(|| Error::Parse("missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| Error::Parse(format!("{e}"))))
        .collect::<Result<_>>()?;
    if dims.len() != 3 {
        return Err(Error::Parse(format!("bad size line: {size}")));
    }
    let mut trips = Vec::with_capacity(dims[2]);
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 3 {
            return Err(Error::Parse(format!("bad entry line: {line}")));
        }
        let r: usize = tok[0].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let c: usize = tok[1].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let v: f64 = tok[2].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        if r == 0 || c == 0 || r > dims[0] || c > dims[1] {
            return Err(Error::Parse(format!("index out of range: {line}")));
        }
        trips.push((r - 1, c - 1, T::lit(v)));
        if symmetric && r != c {
            trips.push((c - 1, r - 1, T::lit(v)));
        }
    }
    Ok(CsrMatrix::from_triplets(dims[0], dims[1], &trips))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_sorted() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 3.0), (1, 1, -1.0)]);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 2), 4.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.mul_vec(&[1.0, 1.0, 1.0]), vec![6.0, -1.0]);
    }

    #[test]
    fn matrix_market_round_trip() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 0, 1.5), (2, 1, -0.25), (1, 2, 1e-20)]);
        let mut buf = Vec::new();
        a.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(2).unwrap().starts_with("1 1 "));
        let b: CsrMatrix<f64> = read_matrix_market(&text).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bandwidth_and_asymmetry() {
        let a = CsrMatrix::from_triplets(4, 4, &[(0, 3, 1.0), (3, 0, 2.0), (1, 1, 1.0)]);
        assert_eq!(a.bandwidth(), 3);
        assert_eq!(a.max_asymmetry(), 1.0);
    }
}
