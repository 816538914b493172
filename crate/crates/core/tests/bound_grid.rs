use fedinfo::bounds::{
    gen_bounds_centralized, gen_bounds_distributed, gen_bounds_federated, legendre_dual_inverse,
    lemma2_closed_forms, lemma3_closed_forms, lemma4_closed_forms, subgaussian_envelope,
    BoundReport, EnvelopePair, EnvelopeSide,
};
use fedinfo::paradigms::FederatedConfig;
use proptest::prelude::*;

fn closed_form_bounds(users: usize, n: usize, d: usize, variance: f64) -> BoundReport {
    if users == 1 {
        let r = lemma2_closed_forms(n, d, variance).unwrap();
        return gen_bounds_centralized(&vec![r.mi_per_sample; n], &r.psi_plus, &r.psi_minus)
            .unwrap()
            .with_analytic_gen(r.gen);
    }
    let reports = lemma3_closed_forms(&vec![n; users], &vec![variance; users], d).unwrap();
    let mi: Vec<Vec<f64>> = reports.iter().map(|r| vec![r.mi_per_sample; n]).collect();
    let envelopes: Vec<EnvelopePair> = reports
        .iter()
        .map(|r| EnvelopePair::new(r.psi_plus.clone(), r.psi_minus.clone()))
        .collect();
    gen_bounds_distributed(&mi, &vec![n; users], &envelopes)
        .unwrap()
        .with_analytic_gen(reports[0].gen)
}

#[test]
fn sandwich_over_default_grid() {
    let mut checked = 0;
    for users in [1, 2, 5, 10] {
        for n in [2, 4, 16] {
            for d in [1, 5] {
                for variance in [0.5, 1.0, 2.0] {
                    let report = closed_form_bounds(users, n, d, variance);
                    assert_eq!(
                        report.sandwiches(),
                        Some(true),
                        "{users} {n} {d} {variance}: {report:?}"
                    );
                    assert_eq!(report.lower, 0.0);
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(checked, 72);
}

#[test]
fn federated_sandwich_under_full_participation() {
    for t in 1..=4 {
        let config = FederatedConfig::symmetric(5, 4, t, 5, 2, 1.0).unwrap();
        let log = config.full_participation();
        let r = lemma4_closed_forms(t, 4, 5, 5, 1.0, 2).unwrap();
        let pair = EnvelopePair::new(r.psi_plus.clone(), r.psi_minus.clone());
        let report = gen_bounds_federated(
            &vec![vec![r.mi_per_sample; 4]; 5],
            &log,
            t,
            &[4; 5],
            &vec![pair; 5],
        )
        .unwrap()
        .with_analytic_gen(r.gen);
        assert_eq!(report.sandwiches(), Some(true), "t={t}: {report:?}");
    }
}

#[test]
fn numeric_dual_inverse_grid() {
    for r in [0.5, 1.0, 3.0] {
        let env = subgaussian_envelope(r, EnvelopeSide::Minus).unwrap();
        for u in [0.01, 0.1, 1.0, 10.0] {
            let numeric = legendre_dual_inverse(&env, u).unwrap();
            let exact = (2.0 * r * r * u).sqrt();
            assert!(
                (numeric - exact).abs() <= 1e-9,
                "R={r} u={u}: {numeric} vs {exact}"
            );
        }
    }
}

proptest! {
    #[test]
    fn dual_inverse_is_monotone_and_concave(r in 0.1f64..5.0, u in 0.01f64..20.0, h in 0.01f64..5.0) {
        let env = subgaussian_envelope(r, EnvelopeSide::Minus).unwrap();
        let f = |x: f64| legendre_dual_inverse(&env, x).unwrap();
        let (a, b, c) = (f(u), f(u + h), f(u + 2.0 * h));
        prop_assert!(a <= b + 1e-9);
        prop_assert!(a + c - 2.0 * b <= 1e-8);
    }

    #[test]
    fn upper_bound_grows_with_information(n in 2usize..40, d in 1usize..6, variance in 0.1f64..4.0, scale in 1.0f64..4.0) {
        let r = lemma2_closed_forms(n, d, variance).unwrap();
        let base = gen_bounds_centralized(&vec![r.mi_per_sample; n], &r.psi_plus, &r.psi_minus).unwrap();
        let more = gen_bounds_centralized(&vec![scale * r.mi_per_sample; n], &r.psi_plus, &r.psi_minus).unwrap();
        prop_assert!(base.upper <= more.upper);
        prop_assert!(base.upper >= r.gen);
    }

    #[test]
    fn equal_case_sandwich(users in 1usize..12, n in 2usize..20, d in 1usize..6, variance in 0.1f64..4.0) {
        let report = closed_form_bounds(users, n, d, variance);
        prop_assert_eq!(report.sandwiches(), Some(true));
    }
}
