use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::linalg::{gaussian_matrix, gaussian_vector, random_orthonormal};
use crate::matops::{restricted_constants_exact, MeasurementOperator, Perturbation};

fn random_instance(seed: u64, symmetric: bool) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d1 = rng.random_range(2..7);
    let d2 = if symmetric { d1 } else { rng.random_range(2..7) };
    let n = rng.random_range(5..30);
    let op = MeasurementOperator::gaussian(d1, d2, n, seed, symmetric).unwrap();
    let mut m = gaussian_matrix(&mut rng, d1, 1) * gaussian_matrix(&mut rng, 1, d2);
    if symmetric {
        m = (&m + m.transpose()) * 0.5;
    }
    let xi = gaussian_vector(&mut rng, n) * 0.1;
    ProblemInstance::from_truth(op, m, xi, rng.random_range(0.0..0.5)).unwrap()
}

fn random_point(inst: &ProblemInstance, r: usize, rng: &mut ChaCha8Rng) -> FactorPoint {
    let (d1, d2) = inst.op().domain_shape();
    FactorPoint::random(rng, d1, d2, r, inst.is_symmetric(), 2.0)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

#[test]
fn exact_fit_has_zero_value_and_gradient() {
    let op = MeasurementOperator::gaussian(4, 3, 15, 0, false).unwrap();
    let m = gaussian_matrix(&mut ChaCha8Rng::seed_from_u64(1), 4, 3);
    let inst = ProblemInstance::from_truth(op, m.clone(), DVector::zeros(15), 0.0).unwrap();
    assert!(phi_value(&inst, &m).unwrap() < 1e-28);
    assert!(phi_grad(&inst, &m).unwrap().norm() < 1e-13);
}

#[test]
fn identity_gradient_is_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let target = gaussian_matrix(&mut rng, 3, 4);
    let op = MeasurementOperator::identity(3, 4, false).unwrap();
    let inst = ProblemInstance::new(op.clone(), op.forward(&target).unwrap(), 0.3).unwrap();
    let m = gaussian_matrix(&mut rng, 3, 4);
    assert!((phi_grad(&inst, &m).unwrap() - (&m - &target)).norm() < 1e-14);
    let expect = 0.5 * (&m - &target).norm_squared() + 0.3 * nuclear_norm(&m);
    assert!((convex_value(&inst, &m).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn zero_point_value_is_half_b_squared() {
    let inst = random_instance(3, false);
    let p = random_point(&inst, 2, &mut ChaCha8Rng::seed_from_u64(0)).zeros_like();
    assert!((f_value(&inst, &p).unwrap() - 0.5 * inst.b().norm_squared()).abs() < 1e-12);
    assert!((convex_value(&inst, &DMatrix::zeros(p.u.nrows(), p.v_or_u().nrows())).unwrap()
        - 0.5 * inst.b().norm_squared())
    .abs()
        < 1e-12);
}

#[test]
fn gl_invariance_only_without_regularization() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inst = random_instance(4, false).with_lambda(0.0).unwrap();
    let p = random_point(&inst, 3, &mut rng);
    let g = gaussian_matrix(&mut rng, 3, 3) + DMatrix::identity(3, 3) * 3.0;
    let g_inv_t = g.clone().try_inverse().unwrap().transpose();
    let q = FactorPoint::asymmetric(&p.u * &g, p.v.as_ref().unwrap() * g_inv_t).unwrap();
    let (a, b) = (f_value(&inst, &p).unwrap(), f_value(&inst, &q).unwrap());
    assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    let reg = inst.with_lambda(0.2).unwrap();
    assert!((f_value(&reg, &p).unwrap() - f_value(&reg, &q).unwrap()).abs() > 1e-6);
}

#[test]
fn soft_threshold_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q = random_orthonormal(&mut rng, 5, 2);
    let p = random_orthonormal(&mut rng, 4, 2);
    let m = &p * q.transpose();
    assert!((svd_soft_threshold(&m, 0.3) - &m * 0.7).norm() < 1e-13);
    assert!(svd_soft_threshold(&m, 1.5).norm() == 0.0);
    let a = gaussian_matrix(&mut rng, 4, 5);
    assert!((svd_soft_threshold(&a, 0.0) - &a).norm() < 1e-12);
}

#[test]
fn identity_convex_optimum_is_soft_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let target = gaussian_matrix(&mut rng, 4, 4);
    let op = MeasurementOperator::identity(4, 4, false).unwrap();
    let inst = ProblemInstance::new(op.clone(), op.forward(&target).unwrap(), 0.8).unwrap();
    let best = svd_soft_threshold(&target, 0.8);
    let v0 = convex_value(&inst, &best).unwrap();
    for _ in 0..100 {
        let pert = gaussian_matrix(&mut rng, 4, 4) * 1e-2;
        assert!(convex_value(&inst, &(&best + pert)).unwrap() >= v0);
    }
}

#[test]
fn balanced_factors_attain_nuclear_norm() {
    let inst = random_instance(7, false);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = random_point(&inst, 2, &mut rng);
    let svd = crate::linalg::SortedSvd::new(&p.product());
    let s = DMatrix::from_diagonal(&DVector::from_iterator(2, svd.s.iter().take(2).map(|x| x.sqrt())));
    let balanced = FactorPoint::asymmetric(svd.leading_u(2) * &s, svd.leading_v(2) * &s).unwrap();
    let a = convex_value(&inst, &balanced.product()).unwrap();
    let b = f_value(&inst, &balanced).unwrap();
    assert!((a - b).abs() < 1e-10 * a.max(1.0));
}

#[test]
fn symmetric_and_asymmetric_modes_agree_on_diagonal_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = gaussian_matrix(&mut rng, 4, 4);
    let g = (&g + g.transpose()) * (0.3 / g.norm());
    let m_star = {
        let q = random_orthonormal(&mut rng, 4, 1);
        &q * q.transpose()
    };
    let sym_op = MeasurementOperator::rank_one_perturbed(&g, Perturbation::FromG, true).unwrap();
    let asym_op = MeasurementOperator::rank_one_perturbed(&g, Perturbation::FromG, false).unwrap();
    let sym = ProblemInstance::from_truth(sym_op, m_star.clone(), DVector::zeros(10), 0.1).unwrap();
    let asym = ProblemInstance::from_truth(asym_op, m_star, DVector::zeros(16), 0.1).unwrap();
    let u = gaussian_matrix(&mut rng, 4, 2);
    let a = f_value(&asym, &FactorPoint::asymmetric(u.clone(), u.clone()).unwrap()).unwrap();
    let s = f_value(&sym, &FactorPoint::symmetric(u)).unwrap();
    assert!((a - s).abs() < 1e-12);
}

#[test]
fn mode_mismatch_is_a_dimension_error() {
    let inst = random_instance(9, true);
    let d = inst.op().domain_shape().0;
    let p = FactorPoint::asymmetric(DMatrix::zeros(d, 1), DMatrix::zeros(d, 1)).unwrap();
    assert!(matches!(f_value(&inst, &p), Err(crate::Error::Dimension(_))));
}

#[test]
fn zero_point_hvp_has_cross_structure() {
    let inst = random_instance(10, false).with_lambda(0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let p = random_point(&inst, 2, &mut rng).zeros_like();
    let d = p.random_like(&mut rng);
    let g0 = phi_grad(&inst, &p.product()).unwrap();
    let h = f_hvp(&inst, &p, &d).unwrap();
    let dv = d.v.as_ref().unwrap();
    assert!((&h.u - &g0 * dv).norm() < 1e-12);
    assert!((h.v.as_ref().unwrap() - g0.tr_mul(&d.u)).norm() < 1e-12);
    let q = f_hess_quadform(&inst, &p, &d).unwrap();
    assert!((q - 2.0 * g0.dot(&(&d.u * dv.transpose()))).abs() < 1e-12);
}

#[test]
fn ip_bd_inequality_with_exact_constants() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..50 {
        let d = 7;
        let k = 6;
        let g = gaussian_matrix(&mut rng, d, d);
        let g = &g * (rng.random_range(0.3..0.99) / g.norm());
        let op = MeasurementOperator::rank_one_perturbed(&g, Perturbation::FromG, false).unwrap();
        let c = restricted_constants_exact(&op, k).unwrap();
        let inst = ProblemInstance::new(op, gaussian_vector(&mut rng, d * d), 0.0).unwrap();
        // M1, M2, E of rank <= k/3 = 2 inside a shared k-dimensional factor span
        let qu = random_orthonormal(&mut rng, d, k);
        let qv = random_orthonormal(&mut rng, d, k);
        let mk = |rng: &mut ChaCha8Rng| &qu * gaussian_matrix(rng, k, 2) * gaussian_matrix(rng, 2, k) * qv.transpose();
        let (m1, m2, e) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let lhs = ((phi_grad(&inst, &m2).unwrap() - phi_grad(&inst, &m1).unwrap()).dot(&e)
            - 0.5 * (c.l_k + c.mu_k) * (&m2 - &m1).dot(&e))
        .abs();
        let rhs = 0.5 * (c.l_k - c.mu_k) * (&m2 - &m1).norm() * e.norm();
        assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12, "trial {trial}: {lhs} > {rhs}");
    }
}

fn fd_gradient_error(inst: &ProblemInstance, p: &FactorPoint) -> f64 {
    let h = 1e-5;
    let x = p.to_vector();
    let g = f_grad(inst, p).unwrap().to_vector();
    let mut fd = DVector::zeros(x.len());
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let fp = f_value(inst, &p.from_vector_like(&xp).unwrap()).unwrap();
        let fm = f_value(inst, &p.from_vector_like(&xm).unwrap()).unwrap();
        fd[i] = (fp - fm) / (2.0 * h);
    }
    (fd - &g).norm() / g.norm().max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_matches_finite_differences(seed in 0u64..10_000, symmetric: bool, r in 1usize..4) {
        let inst = random_instance(seed, symmetric);
        let p = random_point(&inst, r, &mut ChaCha8Rng::seed_from_u64(seed + 1));
        prop_assert!(fd_gradient_error(&inst, &p) <= 1e-5);
        let m = p.product();
        let dm = {
            let mut e = gaussian_matrix(&mut ChaCha8Rng::seed_from_u64(seed + 2), m.nrows(), m.ncols());
            if symmetric { e = (&e + e.transpose()) * 0.5; }
            e
        };
        let h = 1e-5;
        let fd = (phi_value(&inst, &(&m + &dm * h)).unwrap() - phi_value(&inst, &(&m - &dm * h)).unwrap()) / (2.0 * h);
        prop_assert!(rel(fd, phi_grad(&inst, &m).unwrap().dot(&dm)) <= 1e-6);
    }

    #[test]
    fn quadform_matches_second_differences(seed in 0u64..10_000, symmetric: bool, r in 1usize..4) {
        let inst = random_instance(seed, symmetric);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 3);
        let p = random_point(&inst, r, &mut rng);
        let d = p.random_like(&mut rng);
        let h = 1e-4;
        let f0 = f_value(&inst, &p).unwrap();
        let fp = f_value(&inst, &p.add_scaled(&d, h)).unwrap();
        let fm = f_value(&inst, &p.add_scaled(&d, -h)).unwrap();
        let fd = (fp - 2.0 * f0 + fm) / (h * h);
        prop_assert!(rel(fd, f_hess_quadform(&inst, &p, &d).unwrap()) <= 1e-4);
    }

    #[test]
    fn hvp_matches_gradient_differences(seed in 0u64..10_000, symmetric: bool, r in 1usize..4) {
        let inst = random_instance(seed, symmetric);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 4);
        let p = random_point(&inst, r, &mut rng);
        let d = p.random_like(&mut rng);
        let h = 1e-5;
        let gp = f_grad(&inst, &p.add_scaled(&d, h)).unwrap();
        let gm = f_grad(&inst, &p.add_scaled(&d, -h)).unwrap();
        let fd = gp.add_scaled(&gm, -1.0).scaled(0.5 / h);
        let hv = f_hvp(&inst, &p, &d).unwrap();
        prop_assert!(fd.add_scaled(&hv, -1.0).norm() <= 1e-4 * hv.norm().max(1e-12));
    }

    #[test]
    fn factored_dominates_convex(seed in 0u64..10_000, symmetric: bool, r in 1usize..4) {
        let inst = random_instance(seed, symmetric);
        let p = random_point(&inst, r, &mut ChaCha8Rng::seed_from_u64(seed + 5));
        let fv = f_value(&inst, &p).unwrap();
        let cv = convex_value(&inst, &p.product()).unwrap();
        prop_assert!(fv >= cv - 1e-12 * fv.abs().max(1.0));
    }
}

#[test]
fn planted_truth_has_requested_spectrum() {
    let inst = ProblemInstance::gaussian_planted(6, 7, 40, &[2.0, 0.5], 0.0, 3, false).unwrap();
    let sv = singular_values(inst.m_star().unwrap());
    assert!((sv[0] - 2.0).abs() < 1e-12 && (sv[1] - 0.5).abs() < 1e-12 && sv[2] < 1e-12);
    assert!((inst.b() - inst.op().forward(inst.m_star().unwrap()).unwrap()).norm() == 0.0);

    let sym = ProblemInstance::gaussian_planted(5, 5, 30, &[1.0], 0.1, 3, true).unwrap();
    let m = sym.m_star().unwrap();
    assert!((m - m.transpose()).norm() < 1e-14);
    assert!(ProblemInstance::gaussian_planted(3, 4, 10, &[1.0; 4], 0.0, 0, false).is_err());
}

#[test]
fn planted_instances_are_deterministic() {
    let a = ProblemInstance::gaussian_planted(6, 7, 40, &[1.0], 0.0, 9, false).unwrap();
    let b = ProblemInstance::gaussian_planted(6, 7, 40, &[1.0], 0.0, 9, false).unwrap();
    assert_eq!(a.b(), b.b());
    assert_eq!(a.m_star(), b.m_star());
}

#[test]
fn cached_tangent_hvp_matches_normal_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for (d1, d2, r, sym) in [(12, 14, 2, false), (20, 20, 2, true), (20, 9, 1, false)] {
        let n = d1 * d2 / 2;
        let op = MeasurementOperator::gaussian(d1, d2, n, 5, sym).unwrap();
        let inst = ProblemInstance::new(op, gaussian_vector(&mut rng, n), 0.3).unwrap();
        let p = FactorPoint::random(&mut rng, d1, d2, r, sym, 1.0);
        assert!(inst.op().tangent_products(&p.u, p.v.as_ref()).is_some());
        let lin = inst.factored().linearize(&p).unwrap();
        let dir = p.random_like(&mut rng);
        let fast = lin.hvp(&dir).unwrap();

        let g = &lin.grad_phi;
        let slow = match (&p.v, &dir.v) {
            (Some(v), Some(dv)) => {
                let s = inst.op().normal(&(&dir.u * v.transpose() + &p.u * dv.transpose())).unwrap();
                FactorPoint { u: &s * v + g * dv + &dir.u * 0.3, v: Some(s.tr_mul(&p.u) + g.tr_mul(&dir.u) + dv * 0.3) }
            }
            _ => {
                let s = inst.op().normal(&(&p.u * dir.u.transpose() + &dir.u * p.u.transpose())).unwrap();
                FactorPoint::symmetric((&s * &p.u + g * &dir.u + &dir.u * 0.3) * 2.0)
            }
        };
        let diff = fast.add_scaled(&slow, -1.0).norm();
        assert!(diff <= 1e-12 * slow.norm(), "{d1}x{d2} r={r} sym={sym}: {diff:e}");
    }
}

#[test]
fn tangent_products_skip_large_ranks_and_rank_one_operators() {
    let op = MeasurementOperator::gaussian(6, 6, 20, 0, false).unwrap();
    assert!(op.tangent_products(&DMatrix::zeros(6, 2), Some(&DMatrix::zeros(6, 2))).is_none());
    let id = MeasurementOperator::identity(30, 30, false).unwrap();
    assert!(id.tangent_products(&DMatrix::zeros(30, 1), Some(&DMatrix::zeros(30, 1))).is_none());
}
