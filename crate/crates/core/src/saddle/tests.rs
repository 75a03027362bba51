use nalgebra::DMatrix;

use super::*;
use crate::testutil::*;

fn dense_kkt(sys: &SaddleSystem<f64>) -> DMatrix<f64> {
    let (_, _, m, k) = dense_blocks(sys);
    let (mg, a, one, z) = dense_operators(sys);
    let lam = match sys.control() {
        ControlSpace::L2 => m,
        ControlSpace::H1 => k,
    };
    let ny = a.nrows();
    let nh = lam.nrows();
    let dim = 2 * ny + nh;
    let mut s = DMatrix::zeros(dim, dim);
    s.view_mut((0, 0), (ny, ny)).copy_from(&mg);
    s.view_mut((0, ny + nh), (ny, ny)).copy_from(&a);
    s.view_mut((ny + nh, 0), (ny, ny)).copy_from(&a);
    s.view_mut((ny, ny), (nh, nh)).copy_from(&(&lam * sys.beta()));
    let c = -(&lam * one.transpose() * &z);
    s.view_mut((ny, ny + nh), (nh, ny)).copy_from(&c);
    s.view_mut((ny + nh, ny), (ny, nh)).copy_from(&c.transpose());
    s
}

#[test]
fn matches_dense_assembly() {
    for field in [Field::Bounded, Field::LogNormal] {
        for control in [ControlSpace::L2, ControlSpace::H1] {
            let sys = tiny_system(4, 4, field, 1e-2, 0.1, control);
            let d = sys.dense_saddle(10_000).unwrap();
            assert!(rel_diff(&d, &dense_kkt(&sys)) < 1e-13);
        }
    }
}

#[test]
fn deterministic_kkt_for_one_sample() {
    let sys = tiny_system(4, 1, Field::Bounded, 1e-3, 0.0, ControlSpace::L2);
    let a = sys.stiffness()[0].to_dense();
    let m = sys.mass().to_dense();
    let nh = 9;
    let mut s = DMatrix::zeros(3 * nh, 3 * nh);
    s.view_mut((0, 0), (nh, nh)).copy_from(&m);
    s.view_mut((0, 2 * nh), (nh, nh)).copy_from(&a);
    s.view_mut((2 * nh, 0), (nh, nh)).copy_from(&a);
    s.view_mut((nh, nh), (nh, nh)).copy_from(&(&m * 1e-3));
    s.view_mut((nh, 2 * nh), (nh, nh)).copy_from(&(-&m));
    s.view_mut((2 * nh, nh), (nh, nh)).copy_from(&(-&m));
    assert!(rel_diff(&sys.dense_saddle(1000).unwrap(), &s) < 1e-14);
}

#[test]
fn rhs_structure() {
    let sys = tiny_system(4, 4, Field::Bounded, 1e-2, 0.1, ControlSpace::L2);
    let space = crate::fem::FeSpace::unit_square(4).unwrap();
    let yd: Vec<f64> = crate::fem::default_target(&space);
    let myd = sys.mass().mul_vec(&yd);
    let b = sys.rhs();
    assert!(b.u.iter().all(|&v| v == 0.0));
    for (i, z) in sys.zeta().iter().enumerate() {
        let blk = &b.y[i * 9..(i + 1) * 9];
        for j in 0..9 {
            assert!((blk[j] - z * myd[j]).abs() < 1e-15);
        }
    }
}

#[test]
fn zero_and_symmetry() {
    let sys = tiny_system(4, 4, Field::LogNormal, 1e-4, 0.1, ControlSpace::L2);
    let zero = BlockVector::zeros(4, 9);
    assert!(sys.apply_saddle(&zero).unwrap().norm() == 0.0);
    for s in 0..50 {
        let x1 = random_vec(sys.dim(), s);
        let x2 = random_vec(sys.dim(), 1000 + s);
        let s1 = sys.apply_saddle_flat(&x1).unwrap();
        let s2 = sys.apply_saddle_flat(&x2).unwrap();
        let scale = crate::vector::norm(&s1) * crate::vector::norm(&x2);
        let asym = crate::vector::dot(&x2, &s1) - crate::vector::dot(&x1, &s2);
        assert!(asym.abs() < 1e-12 * scale);
    }
    assert!(sys.apply_saddle_flat(&[0.0; 5]).is_err());
}

#[test]
fn mgamma_inverse_round_trip_and_dense_inverse() {
    for gamma in [0.0, 0.1, 1.0] {
        let sys = tiny_system(4, 4, Field::Bounded, 1e-2, gamma, ControlSpace::L2);
        let v = random_vec(36, 3);
        let back = sys.apply_mgamma_inv(&sys.apply_mgamma(&v).unwrap()).unwrap();
        assert!(max_diff(&back, &v) < 1e-10);
        let (mg, ..) = dense_operators(&sys);
        let dense_inv = mg.clone().try_inverse().unwrap();
        let ours = dense_from_operator(36, 100, "M_γ⁻¹", |x| sys.apply_mgamma_inv(x)).unwrap();
        assert!(rel_diff(&ours, &dense_inv) < 1e-10);
        let fwd = dense_from_operator(36, 100, "M_γ", |x| sys.apply_mgamma(x)).unwrap();
        assert!(rel_diff(&fwd, &mg) < 1e-14);
    }
}

#[test]
fn mgamma_inverse_at_gamma_zero() {
    let sys = tiny_system(4, 4, Field::Bounded, 1e-2, 0.0, ControlSpace::L2);
    let v = random_vec(36, 4);
    let got = sys.apply_mgamma_inv(&v).unwrap();
    let m = sys.mass().to_dense().try_inverse().unwrap();
    for i in 0..4 {
        let blk = &m * dvec(&v[i * 9..(i + 1) * 9]) / sys.zeta()[i];
        assert!(max_diff(&got[i * 9..(i + 1) * 9], blk.as_slice()) < 1e-12);
    }
}

#[test]
fn schur_matches_dense_and_is_spd() {
    let sys = tiny_system(4, 4, Field::LogNormal, 1e-2, 0.1, ControlSpace::L2);
    let (_, _, m, _) = dense_blocks(&sys);
    let (mg, a, one, z) = dense_operators(&sys);
    let c_inv = mg.try_inverse().unwrap();
    let zm = &z * &one * &m;
    let s = &a * &c_inv * &a + &zm * (m.clone().try_inverse().unwrap() / sys.beta()) * zm.transpose();
    let ours = sys.dense_schur(100).unwrap();
    assert!(rel_diff(&ours, &s) < 1e-11);
    for seed in 0..50 {
        let v = random_vec(36, seed);
        let sv = sys.apply_schur(&v).unwrap();
        assert!(crate::vector::dot(&v, &sv) > 0.0);
    }
    let h1 = tiny_system(4, 4, Field::Bounded, 1e-2, 0.1, ControlSpace::H1);
    assert!(matches!(
        h1.apply_schur(&[0.0; 36]),
        Err(Error::ControlSpaceMismatch { .. })
    ));
}

#[test]
fn schur_large_beta_limit() {
    let sys = tiny_system(4, 4, Field::Bounded, 1e12, 0.1, ControlSpace::L2);
    let v = random_vec(36, 8);
    let s = sys.apply_schur(&v).unwrap();
    let st = sys.apply_schur_tilde(&v).unwrap();
    assert!(max_diff(&s, &st) < 1e-9 * crate::vector::max_abs(&st));
}

#[test]
fn block_identities() {
    let sys = tiny_system(4, 5, Field::Bounded, 1e-2, 0.1, ControlSpace::L2);
    let nh = sys.nh();
    let v = random_vec(5 * nh, 1);
    let ones = vec![1.0; 5];
    // M 1 1ᵀ v = 1 1ᵀ M v
    let m_then_sum = weighted_block_sum(&map_blocks(&v, nh, |_, x| sys.mass().mul_vec(x)), nh, &ones);
    let sum_then_m = sys.mass().mul_vec(&weighted_block_sum(&v, nh, &ones));
    assert!(max_diff(&m_then_sum, &sum_then_m) < 1e-13);
    // 1ᵀZ1 = I
    let w = random_vec(nh, 2);
    let rep: Vec<f64> = (0..5).flat_map(|_| w.iter().copied()).collect();
    assert!(max_diff(&weighted_block_sum(&rep, nh, sys.zeta()), &w) < 1e-13);
}

#[test]
fn chebyshev_mass_solver() {
    let sys = tiny_system(6, 2, Field::Bounded, 1e-2, 0.1, ControlSpace::L2);
    let cheb = sys
        .with_params(sys.params().with_mass_solver(MassSolver::Chebyshev { steps: 25 }))
        .unwrap();
    let b = random_vec(sys.nh(), 5);
    let exact = sys.mass_solve(&b);
    let approx = cheb.mass_solve(&b);
    assert!(max_diff(&exact, &approx) < 1e-9 * crate::vector::max_abs(&exact));
}

fn dense_reduced(sys: &SaddleSystem<f64>) -> DMatrix<f64> {
    let (a, _, _, k) = dense_blocks(sys);
    let nh = k.nrows();
    let n = a.len();
    let mut ey = DMatrix::zeros(n * nh, nh);
    for (i, ai) in a.iter().enumerate() {
        ey.view_mut((i * nh, 0), (nh, nh))
            .copy_from(&(ai.clone().try_inverse().unwrap() * &k));
    }
    let dim = (2 * n + 1) * nh;
    let mut e = DMatrix::zeros(dim, 3 * nh);
    e.view_mut((0, 0), (n * nh, nh)).copy_from(&ey);
    e.view_mut((n * nh, nh), (nh, nh)).copy_from(&DMatrix::identity(nh, nh));
    e.view_mut(((n + 1) * nh, 2 * nh), (n * nh, nh)).copy_from(&ey);
    e.transpose() * dense_kkt(sys) * e
}

#[test]
fn reduced_operator_matches_dense_and_is_symmetric() {
    for field in [Field::Bounded, Field::LogNormal] {
        let sys = tiny_system(4, 4, field, 1e-4, 0.1, ControlSpace::H1);
        let red = ReducedSystem::new(&sys).unwrap();
        let ours = red.dense(100).unwrap();
        assert!(rel_diff(&ours, &dense_reduced(&sys)) < 1e-9);
        for s in 0..20 {
            let x1 = random_vec(27, s);
            let x2 = random_vec(27, 50 + s);
            let s1 = red.apply(&x1).unwrap();
            let s2 = red.apply(&x2).unwrap();
            let scale = crate::vector::norm(&s1) * crate::vector::norm(&x2);
            assert!((crate::vector::dot(&x2, &s1) - crate::vector::dot(&x1, &s2)).abs() < 1e-9 * scale);
        }
    }
    let l2 = tiny_system(4, 2, Field::Bounded, 1e-2, 0.1, ControlSpace::L2);
    assert!(matches!(ReducedSystem::new(&l2), Err(Error::ControlSpaceMismatch { .. })));
}

#[test]
fn reduced_operator_single_sample_closed_form() {
    // With N = 1 and γ = 0, Eᵀ𝒮E = [[K A⁻¹ M A⁻¹ K, 0, K A⁻¹ K], [0, βK, −K A⁻¹ K], [K A⁻¹ K, −K A⁻¹ K, 0]].
    let beta = 1e-3;
    let sys = tiny_system(4, 1, Field::LogNormal, beta, 0.0, ControlSpace::H1);
    let a = sys.stiffness()[0].to_dense();
    let ainv = a.try_inverse().unwrap();
    let k = sys.laplacian().to_dense();
    let m = sys.mass().to_dense();
    let kak = &k * &ainv * &k;
    let mut want = DMatrix::zeros(27, 27);
    want.view_mut((0, 0), (9, 9)).copy_from(&(&k * &ainv * &m * &ainv * &k));
    want.view_mut((0, 18), (9, 9)).copy_from(&kak);
    want.view_mut((18, 0), (9, 9)).copy_from(&kak);
    want.view_mut((9, 9), (9, 9)).copy_from(&(&k * beta));
    want.view_mut((9, 18), (9, 9)).copy_from(&(-&kak));
    want.view_mut((18, 9), (9, 9)).copy_from(&(-&kak));
    let red = ReducedSystem::new(&sys).unwrap();
    assert!(rel_diff(&red.dense(100).unwrap(), &want) < 1e-10);
}

#[test]
fn parameter_validation() {
    let sys = tiny_system(4, 2, Field::Bounded, 1e-2, 0.1, ControlSpace::L2);
    assert!(sys.with_params(SystemParams::new(0.0, 0.1)).is_err());
    assert!(sys.with_params(SystemParams::new(1.0, -0.1)).is_err());
    assert!(sys.dense_saddle(10).is_err());
}

#[test]
fn single_precision_round_trip() {
    let space = crate::fem::FeSpace::unit_square(4).unwrap();
    let colloc = crate::quadrature::tensorize(&crate::quadrature::gauss_legendre_1d::<f32>(2).unwrap(), 4, 100).unwrap();
    let sys = SaddleSystem::assemble(
        &space,
        &FieldModel::bounded(0.5f32),
        &colloc,
        SystemParams::new(1e-2f32, 0.1),
        None,
        None,
    )
    .unwrap();
    let v: Vec<f32> = (0..16 * 9).map(|i| (i as f32 * 0.37).sin()).collect();
    let back = sys.apply_mgamma_inv(&sys.apply_mgamma(&v).unwrap()).unwrap();
    let err = v.iter().zip(&back).fold(0.0f32, |m, (a, b)| m.max((a - b).abs()));
    assert!(err < 1e-4);
}
