use bmlasso::certify::assemble_hessian;
use bmlasso::linalg::gaussian_vector;
use bmlasso::matops::MeasurementOperator;
use bmlasso::objective::{f_grad, f_hvp, f_value, FactorPoint, ProblemInstance};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, sym: bool) -> (ProblemInstance, FactorPoint) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d1 = rng.random_range(2..=12);
    let d2 = if sym { d1 } else { rng.random_range(2..=12) };
    let r = rng.random_range(1..=4);
    let n = rng.random_range(d1..=2 * d1 * d2);
    let op = MeasurementOperator::gaussian(d1, d2, n, seed, sym).unwrap();
    let inst = ProblemInstance::new(op, gaussian_vector(&mut rng, n), rng.random_range(0.0..2.0)).unwrap();
    let p = FactorPoint::random(&mut rng, d1, d2, r, sym, 1.0);
    (inst, p)
}

fn value_at(inst: &ProblemInstance, p: &FactorPoint, x: &DVector<f64>) -> f64 {
    f_value(inst, &p.from_vector_like(x).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>(), sym: bool) {
        let (inst, p) = instance(seed, sym);
        let x = p.to_vector();
        let g = f_grad(&inst, &p).unwrap().to_vector();
        let h = 1e-6;
        let fd = DVector::from_fn(x.len(), |k, _| {
            let mut e = DVector::zeros(x.len());
            e[k] = h;
            (value_at(&inst, &p, &(&x + &e)) - value_at(&inst, &p, &(&x - &e))) / (2.0 * h)
        });
        prop_assert!((&fd - &g).norm() <= 1e-5 * g.norm().max(1.0), "{}", (&fd - &g).norm());
    }

    #[test]
    fn hvp_matches_gradient_differences(seed in any::<u64>(), sym: bool) {
        let (inst, p) = instance(seed, sym);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let dir = p.random_like(&mut rng);
        let h = 1e-6;
        let gp = f_grad(&inst, &p.add_scaled(&dir, h)).unwrap().to_vector();
        let gm = f_grad(&inst, &p.add_scaled(&dir, -h)).unwrap().to_vector();
        let fd = (gp - gm) / (2.0 * h);
        let hv = f_hvp(&inst, &p, &dir).unwrap().to_vector();
        prop_assert!((&fd - &hv).norm() <= 1e-5 * hv.norm().max(1.0));
    }
}

#[test]
fn assembled_hessian_is_symmetric_and_matches_hvp() {
    for (seed, sym) in [(3, false), (4, true)] {
        let (inst, p) = instance(seed, sym);
        let h = assemble_hessian(&inst, &p).unwrap();
        assert!((&h - h.transpose()).norm() <= 1e-10 * h.norm());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = p.random_like(&mut rng);
        let hv = f_hvp(&inst, &p, &dir).unwrap().to_vector();
        assert!((&h * dir.to_vector() - hv).norm() <= 1e-10 * h.norm().max(1.0));
    }
}
