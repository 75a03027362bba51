//! Random diffusion coefficients: a bounded trigonometric model and a
//! log-normal model driven by a truncated Karhunen–Loève expansion.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::fem::{assemble_mass_full, FeSpace};
use crate::linalg::dense_cholesky;
use crate::{Error, Real, Result};

/// Leading eigenpairs of the unit-variance Gaussian covariance operator
/// `exp(-|x-y|² / L²)` on the unit square.
///
/// Modes are nodal vectors over all mesh vertices and are orthonormal in the
/// inner product induced by the full mass matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct KlBasis<T> {
    pub eigvals: Vec<T>,
    pub modes: Vec<Vec<T>>,
}

impl<T: Real> KlBasis<T> {
    pub fn num_terms(&self) -> usize {
        self.eigvals.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.modes.first().map_or(0, Vec::len)
    }

    /// Sum of the retained eigenvalues; the full operator has trace 1.
    pub fn captured_variance(&self) -> T {
        self.eigvals.iter().fold(T::zero(), |a, &b| a + b)
    }

    /// Text export: header `M vertices`, one line of eigenvalues, then one mode per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.num_terms(), self.num_vertices())?;
        let line = |v: &[T]| {
            v.iter()
                .map(|x| format!("{:.17e}", x.as_f64()))
                .collect::<Vec<_>>()
                .join(" ")
        };
        writeln!(w, "{}", line(&self.eigvals))?;
        for m in &self.modes {
            writeln!(w, "{}", line(m))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<Vec<f64>> {
            let l = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing {what} line")))??;
            l.split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("{what}: {e}")))
                })
                .collect()
        };
        let header = next("header")?;
        if header.len() != 2 {
            return Err(Error::Parse("header must hold two integers".into()));
        }
        let (m, nv) = (header[0] as usize, header[1] as usize);
        let eig = next("eigenvalue")?;
        if eig.len() != m {
            return Err(Error::dim("KL eigenvalues", m, eig.len()));
        }
        let mut modes = Vec::with_capacity(m);
        for _ in 0..m {
            let mode = next("mode")?;
            if mode.len() != nv {
                return Err(Error::dim("KL mode", nv, mode.len()));
            }
            modes.push(mode.into_iter().map(T::lit).collect());
        }
        Ok(KlBasis {
            eigvals: eig.into_iter().map(T::lit).collect(),
            modes,
        })
    }
}

/// Nyström discretization of the covariance `σ² exp(-|x-y|²/L²)` on the mesh vertices.
///
/// Solves `M C M b = λ M b` with the full mass matrix `M` and returns the
/// `m_terms` largest eigenpairs, eigenvalues divided by `σ²`.
pub fn kl_expansion<T: Real>(
    space: &FeSpace,
    sigma2: T,
    corr_len2: T,
    m_terms: usize,
) -> Result<KlBasis<T>> {
    let nv = space.mesh().num_vertices();
    if m_terms == 0 || m_terms > nv {
        return Err(Error::TruncationTooLarge {
            requested: m_terms,
            available: nv,
        });
    }
    if !(corr_len2 > T::zero()) || !(sigma2 > T::zero()) {
        return Err(Error::InvalidParameter(
            "variance and squared correlation length must be positive".into(),
        ));
    }
    let pts: Vec<(T, T)> = space
        .mesh()
        .vertices()
        .map(|(x, y)| (T::lit(x), T::lit(y)))
        .collect();
    let cov = DMatrix::from_fn(nv, nv, |i, j| {
        let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
        sigma2 * (-(dx * dx + dy * dy) / corr_len2).exp()
    });
    let l = dense_cholesky(assemble_mass_full::<T>(space).to_dense())?;
    let mut c = l.transpose() * cov * &l;
    c = (&c + c.transpose()) * T::lit(0.5);
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..nv).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalue")
    });
    let lt = l.transpose();
    let mut eigvals = Vec::with_capacity(m_terms);
    let mut modes = Vec::with_capacity(m_terms);
    for &k in order.iter().take(m_terms) {
        eigvals.push((eig.eigenvalues[k] / sigma2).max(T::zero()));
        let w = eig.eigenvectors.column(k).into_owned();
        let mut b = lt
            .clone()
            .solve_upper_triangular(&w)
            .expect("nonsingular Cholesky factor");
        // Fix the sign so the largest-magnitude entry is positive.
        let imax = b.iamax();
        if b[imax] < T::zero() {
            b.neg_mut();
        }
        modes.push(b.iter().copied().collect());
    }
    Ok(KlBasis { eigvals, modes })
}

/// Diffusion coefficient model.
#[derive(Clone, Debug)]
pub enum FieldModel<T> {
    /// `1 + exp(σ²(ξ₁cos(1.1πx) + ξ₂cos(1.2πx) + ξ₃sin(1.3πy) + ξ₄sin(1.4πy)))`
    /// with `ξ ∈ [-1,1]⁴`.
    Bounded { sigma2: T },
    /// `exp(σ Σ_j √λ_j b_j(x) ξ_j)` with standard normal `ξ`.
    LogNormal {
        sigma2: T,
        corr_len2: T,
        kl: KlBasis<T>,
    },
}

impl<T: Real> FieldModel<T> {
    pub fn bounded(sigma2: T) -> Self {
        FieldModel::Bounded { sigma2 }
    }

    pub fn log_normal(space: &FeSpace, sigma2: T, corr_len2: T, m_terms: usize) -> Result<Self> {
        let kl = kl_expansion(space, sigma2, corr_len2, m_terms)?;
        Ok(FieldModel::LogNormal {
            sigma2,
            corr_len2,
            kl,
        })
    }

    /// Length of the parameter vector.
    pub fn param_dim(&self) -> usize {
        match self {
            FieldModel::Bounded { .. } => 4,
            FieldModel::LogNormal { kl, .. } => kl.num_terms(),
        }
    }

    pub fn sigma2(&self) -> T {
        match self {
            FieldModel::Bounded { sigma2 } | FieldModel::LogNormal { sigma2, .. } => *sigma2,
        }
    }
}

/// Pointwise value of the bounded trigonometric model.
pub fn bounded_value<T: Real>(sigma2: T, x: T, y: T, xi: &[T]) -> T {
    let pi = T::pi();
    let g = xi[0] * (T::lit(1.1) * pi * x).cos()
        + xi[1] * (T::lit(1.2) * pi * x).cos()
        + xi[2] * (T::lit(1.3) * pi * y).sin()
        + xi[3] * (T::lit(1.4) * pi * y).sin();
    T::one() + (sigma2 * g).exp()
}

/// Coefficient values at every mesh vertex for parameter `xi`.
pub fn eval_field<T: Real>(model: &FieldModel<T>, space: &FeSpace, xi: &[T]) -> Result<Vec<T>> {
    if xi.len() != model.param_dim() {
        return Err(Error::dim("field parameter", model.param_dim(), xi.len()));
    }
    match model {
        FieldModel::Bounded { sigma2 } => Ok(space
            .mesh()
            .vertices()
            .map(|(x, y)| bounded_value(*sigma2, T::lit(x), T::lit(y), xi))
            .collect()),
        FieldModel::LogNormal { sigma2, kl, .. } => {
            let nv = space.mesh().num_vertices();
            if kl.num_vertices() != nv {
                return Err(Error::dim("KL mode length", nv, kl.num_vertices()));
            }
            let sigma = sigma2.sqrt();
            let mut g = vec![T::zero(); nv];
            for ((lam, mode), &z) in kl.eigvals.iter().zip(&kl.modes).zip(xi) {
                let c = sigma * lam.sqrt() * z;
                for (gv, &b) in g.iter_mut().zip(mode) {
                    *gv += c * b;
                }
            }
            Ok(g.into_iter().map(|v| v.exp()).collect())
        }
    }
}

/// Minimum and maximum of a sampled coefficient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldExtremes<T> {
    pub a_min: T,
    pub a_max: T,
}

impl<T: Real> FieldExtremes<T> {
    pub fn ratio(&self) -> T {
        self.a_max / self.a_min
    }
}

pub fn field_extremes<T: Real>(values: &[T]) -> Result<FieldExtremes<T>> {
    let first = *values
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty field".into()))?;
    let (a_min, a_max) = values
        .iter()
        .fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(a_min > T::zero()) {
        return Err(Error::NonPositiveField { min: a_min.as_f64() });
    }
    Ok(FieldExtremes { a_min, a_max })
}
