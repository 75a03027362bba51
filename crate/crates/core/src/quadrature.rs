//! Collocation sets: tensorized Gauss rules and Monte Carlo samples.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Real, Result};

/// Default upper bound on the number of tensor-grid nodes.
pub const DEFAULT_NODE_CAP: usize = 1_000_000;

/// One-dimensional rule with weights normalized to sum 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule1d<T> {
    pub family: GaussFamily,
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GaussFamily {
    /// Uniform probability measure on `[-1, 1]`.
    Legendre,
    /// Standard normal measure.
    Hermite,
}

impl GaussFamily {
    /// Off-diagonal `b_k` of the Jacobi matrix of orthonormal polynomials.
    fn recurrence(self, k: usize) -> f64 {
        let k = k as f64;
        match self {
            GaussFamily::Legendre => k / (4.0 * k * k - 1.0).sqrt(),
            GaussFamily::Hermite => k.sqrt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GaussFamily::Legendre => "gauss-legendre",
            GaussFamily::Hermite => "gauss-hermite",
        }
    }
}

/// Values and derivatives of `p_m` together with `Σ_{k<m} p_k²` for the
/// orthonormal family.
fn orthonormal_eval(family: GaussFamily, m: usize, x: f64) -> (f64, f64, f64) {
    let (mut p_prev, mut p) = (0.0, 1.0);
    let (mut d_prev, mut d) = (0.0, 0.0);
    let mut sum_sq = 0.0;
    for k in 0..m {
        sum_sq += p * p;
        let b_next = family.recurrence(k + 1);
        let b_k = if k == 0 { 0.0 } else { family.recurrence(k) };
        let p_next = (x * p - b_k * p_prev) / b_next;
        let d_next = (p + x * d - b_k * d_prev) / b_next;
        (p_prev, p) = (p, p_next);
        (d_prev, d) = (d, d_next);
    }
    (p, d, sum_sq)
}

/// Golub–Welsch nodes refined by Newton steps on the orthonormal polynomial,
/// weights from the Christoffel function.
fn gauss_rule<T: Real>(family: GaussFamily, m: usize) -> Result<Rule1d<T>> {
    if m == 0 {
        return Err(Error::InvalidParameter("Gauss rule needs m ≥ 1".into()));
    }
    let jacobi = DMatrix::from_fn(m, m, |i, j| {
        if i.abs_diff(j) == 1 {
            family.recurrence(i.max(j))
        } else {
            0.0
        }
    });
    let mut x: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    x.sort_by(|a, b| a.partial_cmp(b).expect("finite node"));
    for xi in x.iter_mut() {
        for _ in 0..3 {
            let (p, d, _) = orthonormal_eval(family, m, *xi);
            if d != 0.0 {
                *xi -= p / d;
            }
        }
    }
    for i in 0..m / 2 {
        let s = 0.5 * (x[m - 1 - i] - x[i]);
        x[i] = -s;
        x[m - 1 - i] = s;
    }
    if m % 2 == 1 {
        x[m / 2] = 0.0;
    }
    let mut w: Vec<f64> = x
        .iter()
        .map(|&xi| 1.0 / orthonormal_eval(family, m, xi).2)
        .collect();
    for i in 0..m / 2 {
        let s = 0.5 * (w[i] + w[m - 1 - i]);
        w[i] = s;
        w[m - 1 - i] = s;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(Rule1d {
        family,
        nodes: x.into_iter().map(T::lit).collect(),
        weights: w.into_iter().map(T::lit).collect(),
    })
}

/// `m`-point Gauss–Legendre rule for the uniform probability measure on `[-1,1]`.
pub fn gauss_legendre_1d<T: Real>(m: usize) -> Result<Rule1d<T>> {
    gauss_rule(GaussFamily::Legendre, m)
}

/// `m`-point Gauss–Hermite rule for the standard normal measure.
pub fn gauss_hermite_1d<T: Real>(m: usize) -> Result<Rule1d<T>> {
    gauss_rule(GaussFamily::Hermite, m)
}

/// Sampling distribution for Monte Carlo sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleDistribution {
    StandardNormal,
    /// Uniform on `[-1, 1]`.
    Uniform,
}

/// Origin of a collocation set.
#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Tensor { family: GaussFamily, m: usize },
    /// Samples from `ChaCha8Rng::seed_from_u64(seed)`, drawn node by node,
    /// component by component.
    MonteCarlo {
        distribution: SampleDistribution,
        seed: u64,
    },
    Custom,
}

/// Parameter vectors `ξ_i` with positive weights `ζ_i` summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet<T> {
    nodes: Vec<Vec<T>>,
    weights: Vec<T>,
    provenance: Provenance,
}

impl<T: Real> CollocationSet<T> {
    /// Validated construction; weights must be positive and sum to 1.
    pub fn new(nodes: Vec<Vec<T>>, weights: Vec<T>, provenance: Provenance) -> Result<Self> {
        if nodes.len() != weights.len() {
            return Err(Error::dim("collocation weights", nodes.len(), weights.len()));
        }
        if nodes.is_empty() {
            return Err(Error::InvalidParameter("empty collocation set".into()));
        }
        let dim = nodes[0].len();
        if let Some(bad) = nodes.iter().find(|n| n.len() != dim) {
            return Err(Error::dim("collocation node", dim, bad.len()));
        }
        if weights.iter().any(|&w| !(w > T::zero())) {
            return Err(Error::InvalidParameter(
                "collocation weights must be positive".into(),
            ));
        }
        let total = weights.iter().fold(T::zero(), |a, &b| a + b);
        let tol = T::eps() * T::from_count(4 * weights.len()).max(T::lit(16.0));
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidParameter(format!(
                "collocation weights sum to {total}, expected 1"
            )));
        }
        Ok(CollocationSet {
            nodes,
            weights,
            provenance,
        })
    }

    /// Single node at the origin with weight 1.
    pub fn single(dim: usize) -> Self {
        CollocationSet {
            nodes: vec![vec![T::zero(); dim]],
            weights: vec![T::one()],
            provenance: Provenance::Custom,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn nodes(&self) -> &[Vec<T>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Same set with nodes reordered: entry `k` of the result is node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        CollocationSet {
            nodes: perm.iter().map(|&i| self.nodes[i].clone()).collect(),
            weights: perm.iter().map(|&i| self.weights[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// CSV dump with header `weight,xi_1,...,xi_M`, one row per node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["weight".to_string()];
        header.extend((1..=self.dim()).map(|j| format!("xi_{j}")));
        writeln!(w, "{}", header.join(","))?;
        for (node, wt) in self.nodes.iter().zip(&self.weights) {
            let mut row = vec![format!("{:.17e}", wt.as_f64())];
            row.extend(node.iter().map(|x| format!("{:.17e}", x.as_f64())));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Full tensor grid of `rule` in `dims` dimensions (`m^dims` nodes, last
/// component varying fastest).
pub fn tensorize<T: Real>(rule: &Rule1d<T>, dims: usize, node_cap: usize) -> Result<CollocationSet<T>> {
    if dims == 0 {
        return Err(Error::InvalidParameter("tensor grid needs dims ≥ 1".into()));
    }
    let m = rule.nodes.len();
    let total = (0..dims).try_fold(1usize, |acc, _| acc.checked_mul(m));
    let total = match total {
        Some(t) if t <= node_cap => t,
        _ => {
            return Err(Error::BudgetExceeded {
                nodes: total.unwrap_or(usize::MAX),
                cap: node_cap,
            })
        }
    };
    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; dims];
    for _ in 0..total {
        nodes.push(idx.iter().map(|&k| rule.nodes[k]).collect());
        weights.push(idx.iter().fold(T::one(), |w, &k| w * rule.weights[k]));
        for d in (0..dims).rev() {
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(CollocationSet {
        nodes,
        weights,
        provenance: Provenance::Tensor {
            family: rule.family,
            m,
        },
    })
}

/// `n` independent samples in `dims` dimensions with weights `1/n`.
pub fn monte_carlo<T: Real>(
    dims: usize,
    n: usize,
    seed: u64,
    distribution: SampleDistribution,
) -> Result<CollocationSet<T>> {
    if n == 0 || dims == 0 {
        return Err(Error::InvalidParameter(
            "Monte Carlo needs at least one sample and one dimension".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..n)
        .map(|_| {
            (0..dims)
                .map(|_| {
                    let v: f64 = match distribution {
                        SampleDistribution::StandardNormal => rng.sample(StandardNormal),
                        SampleDistribution::Uniform => rng.random_range(-1.0..=1.0),
                    };
                    T::lit(v)
                })
                .collect()
        })
        .collect();
    Ok(CollocationSet {
        nodes,
        weights: vec![T::one() / T::from_count(n); n],
        provenance: Provenance::MonteCarlo { distribution, seed },
    })
}
