use bsdelab_core::psi::{
    exp_moment_bound, inequality_suite, product_inequality_residual, psi, psi_convexity_residual, psi_scaling_residual,
    RESIDUAL_TOL,
};
use bsdelab_core::{Error, PsiParams};
use proptest::prelude::*;

fn magnitude() -> impl Strategy<Value = f64> {
    (-12.0f64..8.0).prop_map(|e| 10f64.powf(e))
}

fn weight() -> impl Strategy<Value = f64> {
    (-1.3f64..0.7).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #[test]
    fn strictly_increasing(x in magnitude(), r in 1.0001f64..10.0, mu in weight()) {
        prop_assert!(psi(x, mu).unwrap() < psi(x * r, mu).unwrap());
    }

    #[test]
    fn convex(x in magnitude(), y in magnitude(), lambda in 0.0f64..=1.0, mu in weight()) {
        prop_assert!(psi_convexity_residual(x, y, lambda, mu).unwrap().holds(RESIDUAL_TOL));
    }

    #[test]
    fn nondecreasing_in_mu(x in magnitude(), m1 in weight(), m2 in weight()) {
        let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
        prop_assert!(psi(x, lo).unwrap() <= psi(x, hi).unwrap());
    }

    #[test]
    fn product_inequality(x in -40.0f64..40.0, y in magnitude(), mu in weight()) {
        prop_assert!(product_inequality_residual(x, y, mu).unwrap().holds(RESIDUAL_TOL));
    }

    #[test]
    fn scaling_inequality(l in 1.000_001f64..1e6, x in magnitude(), mu in weight()) {
        prop_assert!(psi_scaling_residual(l, x, mu).unwrap().holds(RESIDUAL_TOL));
    }

    #[test]
    fn exp_moment_bound_decreases_to_one(b in 0.0f64..2.0, t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let p = PsiParams::new(2.5, b, 1.0).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(exp_moment_bound(&p, lo).unwrap() >= exp_moment_bound(&p, hi).unwrap());
        prop_assert_eq!(exp_moment_bound(&p, 1.0).unwrap(), 1.0);
    }
}

#[test]
fn random_suite_has_no_violations() {
    for r in inequality_suite(100_000, 7, RESIDUAL_TOL) {
        assert_eq!(r.samples, 100_000);
        assert_eq!(r.violations, 0, "{r:?}");
        assert!(r.worst_margin >= 0.0 || r.worst_margin.abs() <= RESIDUAL_TOL, "{r:?}");
    }
}

#[test]
fn suite_is_reproducible() {
    assert_eq!(inequality_suite(2_000, 3, RESIDUAL_TOL), inequality_suite(2_000, 3, RESIDUAL_TOL));
}

#[test]
fn known_values() {
    assert_eq!(psi(0.0, 1.0).unwrap(), 0.0);
    let e = std::f64::consts::E;
    // ψ(e − 1, μ) = (e − 1)·e^{μ√2}.
    assert!((psi(e - 1.0, 1.0).unwrap() - (e - 1.0) * 2f64.sqrt().exp()).abs() < 1e-12);
    assert!(matches!(exp_moment_bound(&PsiParams::new(0.5, 0.5, 1.0).unwrap(), 0.0), Err(Error::Subcritical { .. })));
    assert!((exp_moment_bound(&PsiParams::new(1.0, 0.5, 1.0).unwrap(), 0.0).unwrap() - 1.154_700_538_379_251_5).abs() < 1e-15);
}
