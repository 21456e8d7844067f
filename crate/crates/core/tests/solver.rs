use bsdelab_core::brownian::simulate_brownian;
use bsdelab_core::quadrature::closed_form_linear;
use bsdelab_core::regression::RegressionBasis;
use bsdelab_core::solver::{solve, Scheme, SolverOptions};
use bsdelab_core::{BsdeProblem, GeneratorSpec, TerminalSpec, TimeGrid};
use proptest::prelude::*;

fn problem(m: usize, f: GeneratorSpec, xi: TerminalSpec) -> BsdeProblem {
    BsdeProblem::new(TimeGrid::uniform(1.0, m).unwrap(), f, xi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn terminal_values_are_exact(seed in any::<u64>(), m in 2usize..12, picard in any::<bool>(), which in 0usize..3) {
        let xi = [TerminalSpec::bounded_sin(2.0), TerminalSpec::running_max(), TerminalSpec::exp_clipped(1.0)][which].clone();
        let p = problem(m, GeneratorSpec::sine(1, 1.5), xi.clone());
        let ens = simulate_brownian(&p.grid, 1, 500, seed).unwrap();
        let scheme = if picard { Scheme::Picard } else { Scheme::BackwardEuler };
        let sol = solve(scheme, &p, &ens, &RegressionBasis::hermite(3), &SolverOptions::default()).unwrap();
        let expected = xi.evaluate(&ens);
        for (a, b) in sol.y_at(m).iter().zip(&expected) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn affine_oracles_at_moderate_size() {
    let cases = [
        (GeneratorSpec::linear(1, 1.0, 0.0, 1.0), TerminalSpec::constant(0.0)),
        (GeneratorSpec::linear(1, 0.0, 0.5, 0.0), TerminalSpec::level()),
        (GeneratorSpec::linear(1, -1.0, 0.5, 0.0), TerminalSpec::bounded_sin(1.0)),
    ];
    for (f, xi) in cases {
        let p = problem(25, f, xi);
        let exact = closed_form_linear(&p).unwrap();
        let ens = simulate_brownian(&p.grid, 1, 20_000, 4).unwrap();
        for scheme in [Scheme::BackwardEuler, Scheme::Picard] {
            let y0 = solve(scheme, &p, &ens, &RegressionBasis::hermite(5), &SolverOptions::default()).unwrap().y0();
            // Loose band: Δt bias of order 0.05·|Y_0| at M = 25 plus noise.
            let tol = 0.05 * exact.abs().max(0.1) + 4.0 * y0.stderr;
            assert!((y0.value - exact).abs() <= tol, "{} {scheme:?}: {} vs {exact}", p.f.name(), y0.value);
        }
    }
    let e = closed_form_linear(&problem(10, GeneratorSpec::linear(1, 1.0, 0.0, 1.0), TerminalSpec::constant(0.0))).unwrap();
    assert!((e - (std::f64::consts::E - 1.0)).abs() < 1e-13);
}

#[test]
fn schemes_agree_on_an_osgood_generator() {
    let p = problem(20, GeneratorSpec::cubic_decay(1, 0.5), TerminalSpec::bounded_sin(1.0));
    let ens = simulate_brownian(&p.grid, 1, 20_000, 8).unwrap();
    let basis = RegressionBasis::hermite(5);
    let a = solve(Scheme::BackwardEuler, &p, &ens, &basis, &SolverOptions::default()).unwrap();
    let b = solve(Scheme::Picard, &p, &ens, &basis, &SolverOptions::default()).unwrap();
    assert!(b.meta.converged);
    let worst = (0..=20)
        .map(|i| a.y_at(i).iter().zip(b.y_at(i)).map(|(x, y)| (x - y).abs()).sum::<f64>() / 20_000.0)
        .fold(0.0f64, f64::max);
    assert!(worst < 0.02, "{worst}");
}
