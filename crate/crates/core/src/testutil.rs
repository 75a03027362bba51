//! Small instances shared by unit tests.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fem::FeSpace;
use crate::quadrature::{monte_carlo, SampleDistribution};
use crate::random_field::FieldModel;
use crate::saddle::{ControlSpace, SaddleSystem, SystemParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Bounded,
    LogNormal,
}

pub fn tiny_system(
    n: usize,
    samples: usize,
    field: Field,
    beta: f64,
    gamma: f64,
    control: ControlSpace,
) -> SaddleSystem<f64> {
    let space = FeSpace::unit_square(n).unwrap();
    let (model, dist) = match field {
        Field::Bounded => (FieldModel::bounded(0.5), SampleDistribution::Uniform),
        Field::LogNormal => (
            FieldModel::log_normal(&space, 0.5, 0.5, 3).unwrap(),
            SampleDistribution::StandardNormal,
        ),
    };
    let colloc = if samples == 1 {
        crate::quadrature::CollocationSet::single(model.param_dim())
    } else {
        let mut c = monte_carlo(model.param_dim(), samples, 17, dist).unwrap();
        // Unequal weights exercise every Z factor.
        let raw: Vec<f64> = (0..samples).map(|i| 1.0 + i as f64).collect();
        let total: f64 = raw.iter().sum();
        c = crate::quadrature::CollocationSet::new(
            c.nodes().to_vec(),
            raw.iter().map(|w| w / total).collect(),
            c.provenance().clone(),
        )
        .unwrap();
        c
    };
    let f: Vec<f64> = space.interpolate(|x, y| x - 0.3 * y);
    SaddleSystem::assemble(
        &space,
        &model,
        &colloc,
        SystemParams::new(beta, gamma).with_control(control),
        None,
        Some(&f),
    )
    .unwrap()
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax()
}

/// Independent dense blocks of an instance: `(A_i, ζ, M_s, K)`.
pub fn dense_blocks(sys: &SaddleSystem<f64>) -> (Vec<DMatrix<f64>>, Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    (
        sys.stiffness().iter().map(|a| a.to_dense()).collect(),
        sys.zeta().to_vec(),
        sys.mass().to_dense(),
        sys.laplacian().to_dense(),
    )
}

/// Block-diagonal dense matrix.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    out
}

/// Dense `M_γ`, `A`, the stacked identity `1` and `Z`.
pub fn dense_operators(sys: &SaddleSystem<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (a, z, m, _) = dense_blocks(sys);
    let nh = m.nrows();
    let n = z.len();
    let g = sys.gamma();
    let big_a = block_diag(&a.iter().zip(&z).map(|(ai, zi)| ai * *zi).collect::<Vec<_>>());
    let big_m = block_diag(&vec![m.clone(); n]);
    let big_z = block_diag(&z.iter().map(|zi| DMatrix::identity(nh, nh) * *zi).collect::<Vec<_>>());
    let mut one = DMatrix::zeros(n * nh, nh);
    for i in 0..n {
        one.view_mut((i * nh, 0), (nh, nh)).copy_from(&DMatrix::identity(nh, nh));
    }
    let mg = &big_m * (&big_z * (1.0 + g) - &big_z * &one * one.transpose() * &big_z * g);
    (mg, big_a, one, big_z)
}
