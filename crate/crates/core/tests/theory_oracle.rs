use bmlasso::theory::{delta_crit, error_bound_thm3, kappa_crit, mu_eff_closed, mu_eff_oracle, TheoryParams};
use proptest::prelude::*;

fn params(r_star: usize, extra: usize, l: f64, mu_frac: f64, l2_frac: f64) -> TheoryParams {
    TheoryParams { r: r_star + extra, r_star, mu: mu_frac * l, l, l2: l2_frac * l, lambda: 0.0, noise_opnorm: 0.0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn closed_form_matches_oracle(
        r_star in 1usize..6,
        extra in 0usize..8,
        l in 0.2f64..3.0,
        mu_frac in 0.0f64..=1.0,
        l2_frac in 0.0f64..=1.0,
    ) {
        let p = params(r_star, extra, l, mu_frac, l2_frac);
        let closed = mu_eff_closed(&p).unwrap().value;
        let oracle = mu_eff_oracle(&p, 1500).unwrap().value;
        prop_assert!((closed - oracle).abs() <= 1e-5 * l.max(1.0), "{closed} vs {oracle}");
    }

    #[test]
    fn mu_eff_increases_in_mu(r_star in 1usize..6, extra in 0usize..8, l2_frac in 0.0f64..=1.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-9);
        let m1 = mu_eff_closed(&params(r_star, extra, 1.0, lo, l2_frac)).unwrap().value;
        let m2 = mu_eff_closed(&params(r_star, extra, 1.0, hi, l2_frac)).unwrap().value;
        prop_assert!(m2 > m1);
    }
}

#[test]
fn rip_specialization_reaches_zero_at_delta_crit() {
    for (r, r_star) in [(1, 1), (3, 1), (5, 2), (20, 2)] {
        let dc = delta_crit(r, r_star).unwrap();
        let p = TheoryParams { r, r_star, mu: 1.0 - dc, l: 1.0 + dc, l2: 1.0 + dc, lambda: 0.0, noise_opnorm: 0.0 };
        assert!(mu_eff_closed(&p).unwrap().value.abs() < 1e-12);
        let k = kappa_crit(r, r_star).unwrap();
        assert!((k - (1.0 + dc) / (1.0 - dc)).abs() < 1e-12);
    }
}

#[test]
fn bound_is_infinite_without_a_positive_constant() {
    let p = TheoryParams { r: 4, r_star: 1, mu: 0.1, l: 1.0, l2: 1.0, lambda: 0.1, noise_opnorm: 0.1 };
    let b = error_bound_thm3(&p).unwrap();
    assert!(!b.hypothesis_feasible && b.value.is_infinite());
    let p = TheoryParams { mu: 0.9, ..p };
    let b = error_bound_thm3(&p).unwrap();
    let me = mu_eff_closed(&p).unwrap().value;
    assert!((b.value - 6.0 * 0.1 / me).abs() < 1e-12);
}
