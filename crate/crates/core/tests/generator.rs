use std::collections::BTreeMap;

use bsdelab_core::checks::{check_lipschitz_y_a5, check_lipschitz_z_a2, check_osgood_a1, check_osgood_function, SamplerConfig};
use bsdelab_core::generator::{girsanov_kernel, GENERATOR_BUILTINS, OSGOOD_BUILTINS};
use bsdelab_core::rng::CounterRng;
use bsdelab_core::{GeneratorSpec, OsgoodFunction};
use proptest::prelude::*;

fn library() -> Vec<GeneratorSpec> {
    vec![
        GeneratorSpec::zero(1),
        GeneratorSpec::linear(1, -1.0, 0.5, 0.2),
        GeneratorSpec::linear(2, 0.7, -1.5, 0.0),
        GeneratorSpec::cubic_decay(1, 0.5),
        GeneratorSpec::osgood_log(1, 2.0),
        GeneratorSpec::sine(1, 1.5),
    ]
}

#[test]
fn kernel_is_bounded_by_declared_b() {
    for f in library() {
        let b = f.require_b().unwrap();
        assert!(check_lipschitz_z_a2(&f, SamplerConfig::default(), 20_000).unwrap().passed(), "{}", f.name());
        let mut rng = CounterRng::new(5, 77);
        let mut z = vec![0.0; f.dim()];
        for _ in 0..100_000 {
            let (t, y) = (rng.uniform(), rng.uniform_in(-50.0, 50.0));
            z.iter_mut().for_each(|v| *v = rng.uniform_in(-50.0, 50.0));
            let k = girsanov_kernel(&f, t, y, &z);
            let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= b + 1e-9 * (1.0 + b), "{}: {norm} > {b}", f.name());
        }
    }
}

proptest! {
    #[test]
    fn affine_kernel_is_the_coefficient(a in -2.0f64..2.0, b in -2.0f64..2.0, t in 0.0f64..1.0, y in -9.0f64..9.0, z in -9.0f64..9.0) {
        prop_assume!(z != 0.0);
        let f = GeneratorSpec::linear(1, a, b, 0.3);
        prop_assert!((girsanov_kernel(&f, t, y, &[z])[0] - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn moduli_vanish_at_zero_and_grow_at_most_linearly(k in 0.01f64..10.0, u in 0.0f64..1e4) {
        for rho in [OsgoodFunction::Linear { k }, OsgoodFunction::Log { k }] {
            prop_assert_eq!(rho.eval(0.0), 0.0);
            prop_assert!(rho.eval(u) <= rho.linear_growth() * (u + 1.0) * (1.0 + 1e-12));
        }
    }
}

#[test]
fn osgood_members_pass_shape_checks() {
    for rho in [OsgoodFunction::Linear { k: 3.0 }, OsgoodFunction::Log { k: 1.0 }] {
        assert!(check_osgood_function(&rho, 100_000, 9).passed(), "{}", rho.describe());
    }
}

#[test]
fn library_satisfies_one_sided_osgood() {
    for f in library() {
        assert!(check_osgood_a1(&f, SamplerConfig::default(), 20_000).unwrap().passed(), "{}", f.name());
    }
}

#[test]
fn square_root_is_not_lipschitz_in_y() {
    let f = GeneratorSpec::custom("sqrt", 1, |_, y, _| y.abs().sqrt()).with_r(1e3);
    assert!(!check_lipschitz_y_a5(&f, SamplerConfig::default(), 20_000).unwrap().passed());
}

#[test]
fn catalogs_are_sorted_and_resolvable() {
    for table in [GENERATOR_BUILTINS, OSGOOD_BUILTINS] {
        assert!(table.windows(2).all(|w| w[0].name < w[1].name));
    }
    let sigs: Vec<String> = GENERATOR_BUILTINS.iter().map(|s| s.signature()).collect();
    assert!(sigs.contains(&"linear{a,b,c}".to_string()) && sigs.contains(&"osgood_log{K}".to_string()));
    for s in GENERATOR_BUILTINS {
        let params: BTreeMap<String, f64> = s.params.iter().map(|p| (p.to_string(), 0.5)).collect();
        assert!(GeneratorSpec::builtin(s.name, &params, 1).is_ok(), "{}", s.name);
    }
}
