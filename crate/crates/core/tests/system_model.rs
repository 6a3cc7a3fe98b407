mod common;

use axon_relax::system_model::{
    catalog, check_initial_compatibility, scaled_rates, validate_assumptions, Catalog, InitialData,
    ModelError, SystemSpec,
};
use nalgebra::DVector;
use proptest::prelude::*;

#[test]
fn random_valid_passes_for_a_thousand_seeds() {
    for seed in 0..1000u64 {
        let r = 2 + (seed % 7) as usize;
        let spec = common::random_spec(r, seed);
        let report = validate_assumptions(&spec, 1e-12);
        assert!(report.passed(), "seed {seed}: {report}");
    }
}

#[test]
fn catalog_columns_sum_to_zero() {
    let mut entries = vec![
        Catalog::Counterexample4x4,
        Catalog::TwoState { a: 1.0, b: 1.0 },
        Catalog::TwoState { a: 0.3, b: 2.7 },
        Catalog::ThreeState {
            offdiag: [0.0, 0.7, 1.3, 0.0, 0.0, 2.1],
        },
    ];
    entries.extend((0..50).map(|seed| Catalog::RandomValid { r: 6, seed }));
    for entry in &entries {
        let spec = catalog(entry).unwrap();
        let k = spec.rates().matrix();
        for j in 0..k.ncols() {
            assert!(k.column(j).sum().abs() <= 1e-14, "{entry:?} column {j}");
        }
    }
}

#[test]
fn equal_speeds_fail_h4_only() {
    let spec = SystemSpec::from_parts(&[2.0, 2.0], &[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
    let report = validate_assumptions(&spec, 1e-12);
    assert_eq!(report.failed(), vec!["H4"]);
}

#[test]
fn reducible_and_negative_rates_are_reported() {
    let reducible = SystemSpec::from_parts(
        &[1.0, 2.0, 3.0],
        &[vec![-1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]],
    )
    .unwrap();
    assert_eq!(validate_assumptions(&reducible, 0.0).failed(), vec!["H3"]);
    let negative = SystemSpec::from_parts(&[1.0, 2.0], &[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
    assert!(validate_assumptions(&negative, 1e-12).failed().contains(&"H1"));
    let backwards = SystemSpec::from_parts(&[1.0, -2.0], &[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
    assert_eq!(validate_assumptions(&backwards, 1e-12).failed(), vec!["H5"]);
}

#[test]
fn random_valid_requires_a_seed() {
    assert!(matches!(
        Catalog::parse("random_valid:4", None),
        Err(ModelError::InvalidParams(_))
    ));
    assert_eq!(
        Catalog::parse("random_valid:4", Some(9)).unwrap(),
        Catalog::RandomValid { r: 4, seed: 9 }
    );
}

#[test]
fn compatibility_of_steady_data() {
    let spec = common::two_state();
    let xi = DVector::from_vec(vec![0.5, 0.5]);
    let report = check_initial_compatibility(&spec, &InitialData::constant(xi), 1e-12).unwrap();
    assert!(report.passed && report.residual < 1e-15);
    let tilted = InitialData::constant(DVector::from_vec(vec![1.0, 0.0]));
    assert!(!check_initial_compatibility(&spec, &tilted, 1e-12).unwrap().passed);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scaling_preserves_rate_verdicts(seed in 0u64..10_000, r in 2usize..7, eps in 1e-3f64..1e3) {
        let spec = common::random_spec(r, seed);
        let scaled = spec.with_epsilon(eps).unwrap();
        let a = validate_assumptions(&spec, 0.0);
        let eff = SystemSpec::new(spec.lambda().clone(), scaled_rates(&scaled), 1.0).unwrap();
        let b = validate_assumptions(&eff, 0.0);
        prop_assert_eq!(a.h1.passed, b.h1.passed);
        prop_assert_eq!(a.h3.passed, b.h3.passed);
        prop_assert!(b.h2.passed || validate_assumptions(&eff, 1e-12 * (1.0 / eps).max(1.0)).h2.passed);
    }

    #[test]
    fn validation_is_deterministic(seed in 0u64..10_000, r in 2usize..9) {
        let spec = common::random_spec(r, seed);
        prop_assert_eq!(validate_assumptions(&spec, 1e-12), validate_assumptions(&spec, 1e-12));
    }

    #[test]
    fn arbitrary_rates_h2_matches_column_sums(
        vals in proptest::collection::vec(-1.0f64..2.0, 9),
        lam in proptest::collection::vec(0.1f64..3.0, 3),
    ) {
        let rows: Vec<Vec<f64>> = vals.chunks(3).map(|c| c.to_vec()).collect();
        let spec = SystemSpec::from_parts(&lam, &rows).unwrap();
        let report = validate_assumptions(&spec, 1e-12);
        let sums_ok = (0..3).all(|j| rows.iter().map(|row| row[j]).sum::<f64>().abs() <= 1e-12);
        prop_assert_eq!(report.h2.passed, sums_ok);
        let offdiag_ok = (0..3).all(|i| (0..3).all(|j| i == j || rows[i][j] >= 0.0));
        prop_assert_eq!(report.h1.passed, offdiag_ok);
    }
}
