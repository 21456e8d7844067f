use bsdelab_core::brownian::simulate_brownian;
use bsdelab_core::harness::{
    class_d_diagnostic, comparison_experiment, default_k_ladder, stability_experiment, ComparisonMode, SolverSetup,
    StabilitySequence, StoppingTimeFamily, Tolerance, EPS_UI,
};
use bsdelab_core::regression::RegressionBasis;
use bsdelab_core::solver::{Scheme, SolutionEnsemble, SolverMeta};
use bsdelab_core::{BsdeProblem, GeneratorSpec, TerminalSpec, TimeGrid};
use proptest::prelude::*;

fn setup() -> SolverSetup {
    SolverSetup::new(Scheme::BackwardEuler, RegressionBasis::hermite(3))
}

#[test]
fn identical_inputs_compare_exactly_equal() {
    let grid = TimeGrid::uniform(1.0, 10).unwrap();
    let ens = simulate_brownian(&grid, 1, 5_000, 3).unwrap();
    let p = BsdeProblem::new(grid, GeneratorSpec::cubic_decay(1, 0.5), TerminalSpec::bounded_sin(1.0));
    let tol = Tolerance::new(0.1, 1.0);
    let r = comparison_experiment(&p, &p, &ens, &setup(), ComparisonMode::Osgood, tol, 0.01).unwrap();
    assert_eq!(r.value("V"), Some(0.0));
    assert_eq!(r.value("V_swapped"), Some(0.0));
    assert_eq!(r.consumed.len(), 2);
    assert_eq!(r.consumed[0], r.consumed[1]);
}

#[test]
fn trivial_stability_coupling_is_exactly_zero() {
    let grid = TimeGrid::uniform(1.0, 10).unwrap();
    let ens = simulate_brownian(&grid, 1, 5_000, 4).unwrap();
    let seq = StabilitySequence {
        base: BsdeProblem::new(grid, GeneratorSpec::linear(1, -1.0, 0.5, 0.0), TerminalSpec::bounded_sin(1.0)),
        envelope: TerminalSpec::abs_sin(),
        terminal_scale: 0.0,
        generator_rate: 0.0,
        n_list: vec![1, 2, 4],
        betas: vec![0.5],
        uniform: true,
    };
    let r = stability_experiment(&seq, &ens, &setup(), 1.0, 0.0).unwrap();
    for m in &r.metrics {
        if m.name.starts_with('S') {
            assert_eq!(m.value, 0.0, "{}", m.name);
        }
    }
    assert!(r.passed());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // The tail functional is nonincreasing in K for any data.
    #[test]
    fn class_d_tails_never_increase(values in prop::collection::vec(-1e4f64..1e4, 6 * 40), mu in 0.1f64..3.0) {
        let grid = TimeGrid::uniform(1.0, 5).unwrap();
        let ens = simulate_brownian(&grid, 1, 40, 1).unwrap();
        let sol = SolutionEnsemble::from_parts(40, 5, 1, values, vec![0.0; 200], SolverMeta::default()).unwrap();
        let family = StoppingTimeFamily::standard(&grid, &sol);
        let r = class_d_diagnostic(&ens, &sol, &family, mu, &default_k_ladder(), EPS_UI).unwrap();
        prop_assert_eq!(r.verdict("tail_nonincreasing"), Some(true));
    }
}

#[test]
fn reports_carry_digests_of_unchanged_inputs() {
    let grid = TimeGrid::uniform(1.0, 8).unwrap();
    let ens = simulate_brownian(&grid, 1, 2_000, 6).unwrap();
    let p = BsdeProblem::new(grid.clone(), GeneratorSpec::cubic_decay(1, 0.5), TerminalSpec::bounded_sin(1.0));
    let sol = setup().solve(&p, &ens).unwrap();
    let before = sol.digest();
    let family = StoppingTimeFamily::standard(&grid, &sol);
    let r = class_d_diagnostic(&ens, &sol, &family, 1.0, &default_k_ladder(), EPS_UI).unwrap();
    assert_eq!(sol.digest(), before);
    assert_eq!(r.consumed, vec![before]);
}
