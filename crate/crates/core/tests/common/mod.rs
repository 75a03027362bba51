//! Instance builders shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ocpuu::fem::FeSpace;
use ocpuu::quadrature::{gauss_hermite_1d, gauss_legendre_1d, monte_carlo, tensorize, SampleDistribution, DEFAULT_NODE_CAP};
use ocpuu::random_field::FieldModel;
use ocpuu::saddle::dense_from_operator;
use ocpuu::{ControlSpace, Result, SaddleSystem, SystemParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Bounded,
    LogNormal,
}

pub const FIELDS: [Field; 2] = [Field::Bounded, Field::LogNormal];

pub fn params(beta: f64, control: ControlSpace) -> SystemParams<f64> {
    SystemParams::new(beta, 0.1).with_control(control)
}

/// Bounded field on an `n×n` mesh with the `m⁴`-node Gauss–Legendre grid.
pub fn bounded_tensor(n: usize, m: usize, sigma2: f64, beta: f64) -> SaddleSystem<f64> {
    let space = FeSpace::unit_square(n).unwrap();
    let colloc = tensorize(&gauss_legendre_1d(m).unwrap(), 4, DEFAULT_NODE_CAP).unwrap();
    SaddleSystem::assemble(&space, &FieldModel::bounded(sigma2), &colloc, params(beta, ControlSpace::L2), None, None)
        .unwrap()
}

/// Three-term log-normal field (L² = 0.5) on the `m³`-node Gauss–Hermite grid.
pub fn lognormal_tensor(n: usize, m: usize, sigma2: f64, beta: f64, control: ControlSpace) -> SaddleSystem<f64> {
    let space = FeSpace::unit_square(n).unwrap();
    let model = FieldModel::log_normal(&space, sigma2, 0.5, 3).unwrap();
    let colloc = tensorize(&gauss_hermite_1d(m).unwrap(), 3, DEFAULT_NODE_CAP).unwrap();
    SaddleSystem::assemble(&space, &model, &colloc, params(beta, control), None, None).unwrap()
}

/// Small instance with `samples` collocation nodes: Monte Carlo for the
/// bounded field, a two-term expansion on the Hermite grid when `samples`
/// is a perfect square for the log-normal field, Monte Carlo otherwise.
pub fn small(n: usize, samples: usize, field: Field, beta: f64, control: ControlSpace) -> SaddleSystem<f64> {
    let space = FeSpace::unit_square(n).unwrap();
    let p = params(beta, control);
    match field {
        Field::Bounded => {
            let colloc = monte_carlo(4, samples, 11, SampleDistribution::Uniform).unwrap();
            SaddleSystem::assemble(&space, &FieldModel::bounded(0.5), &colloc, p, None, None).unwrap()
        }
        Field::LogNormal => {
            let terms = 2.min(space.ndofs());
            let model = FieldModel::log_normal(&space, 0.5, 0.5, terms).unwrap();
            let m = (samples as f64).sqrt().round() as usize;
            let colloc = if terms == 2 && m * m == samples {
                tensorize(&gauss_hermite_1d(m).unwrap(), 2, DEFAULT_NODE_CAP).unwrap()
            } else {
                monte_carlo(terms, samples, 11, SampleDistribution::StandardNormal).unwrap()
            };
            SaddleSystem::assemble(&space, &model, &colloc, p, None, None).unwrap()
        }
    }
}

pub fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dense(dim: usize, f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> DMatrix<f64> {
    dense_from_operator(dim, 10_000, "test operator", f).unwrap()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Symmetric Hausdorff distance between two finite point sets.
pub fn hausdorff(a: &[f64], b: &[f64]) -> f64 {
    let one_way = |x: &[f64], y: &[f64]| {
        x.iter()
            .map(|p| y.iter().fold(f64::INFINITY, |m, q| m.min((p - q).abs())))
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

pub fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.total_cmp(b));
    v
}
