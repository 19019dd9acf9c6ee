use plasmode_core::datamodel::{Covariates, Dataset, OutcomeKind, Term};
use plasmode_core::glm::{fit_linear_weighted, fit_logistic_weighted, predict, Weights};
use proptest::prelude::*;

fn two_covariates(x1: &[f64], x2: &[f64]) -> Covariates {
    Covariates::from_columns(vec!["x1".into(), "x2".into()], &[x1.to_vec(), x2.to_vec()]).unwrap()
}

fn design() -> Vec<Term> {
    vec![Term::Treatment, Term::covariate("x1"), Term::covariate("x2")]
}

/// Rows where both arms appear and the covariates vary enough to identify
/// a three-term design.
fn rows() -> impl Strategy<Value = Vec<(f64, f64, u8, f64, f64)>> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64, 0u8..2, -3.0..3.0f64, 0.1..4.0f64), 12..40).prop_filter(
        "both arms",
        |r| r.iter().any(|t| t.2 == 1) && r.iter().filter(|t| t.2 == 1).count() < r.len() - 1,
    )
}

fn build(r: &[(f64, f64, u8, f64, f64)], kind: OutcomeKind) -> (Dataset, Vec<f64>) {
    let x1: Vec<f64> = r.iter().map(|t| t.0).collect();
    let x2: Vec<f64> = r.iter().map(|t| t.1).collect();
    let a = r.iter().map(|t| t.2).collect();
    let y = r
        .iter()
        .map(|t| match kind {
            OutcomeKind::Continuous => t.3,
            OutcomeKind::Binary => f64::from(t.3 > 0.5 * t.0),
        })
        .collect();
    let w = r.iter().map(|t| t.4).collect();
    (Dataset::new(two_covariates(&x1, &x2), a, y, kind).unwrap(), w)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaling_weights_leaves_wls_unchanged(r in rows(), c in 0.1..50.0f64) {
        let (d, w) = build(&r, OutcomeKind::Continuous);
        let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
        let Ok(a) = fit_linear_weighted(&d, &design(), Weights::Values(&w)) else { return Ok(()) };
        let b = fit_linear_weighted(&d, &design(), Weights::Values(&scaled)).unwrap();
        for (x, y) in a.spec.coefficients().iter().zip(b.spec.coefficients()) {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn converged_logistic_fit_zeroes_the_score(r in rows()) {
        let (d, w) = build(&r, OutcomeKind::Binary);
        let fit = fit_logistic_weighted(&d, &d.y, &design(), Weights::Values(&w)).unwrap();
        if fit.converged {
            let mu = predict(&fit, &d, None).unwrap();
            let x: Vec<[f64; 4]> = (0..d.n())
                .map(|i| [1.0, f64::from(d.a[i]), d.w.get(i, 0), d.w.get(i, 1)])
                .collect();
            for j in 0..4 {
                let s: f64 = (0..d.n()).map(|i| w[i] * x[i][j] * (d.y[i] - mu[i])).sum();
                prop_assert!(s.abs() < 1e-6, "score {j} = {s}");
            }
        }
    }

    #[test]
    fn override_prediction_equals_refilled_treatment(r in rows(), arm in 0u8..2) {
        let (d, w) = build(&r, OutcomeKind::Continuous);
        let Ok(fit) = fit_linear_weighted(&d, &design(), Weights::Values(&w)) else { return Ok(()) };
        let mut filled = d.clone();
        filled.a = vec![arm; d.n()];
        prop_assert_eq!(predict(&fit, &d, Some(arm)).unwrap(), predict(&fit, &filled, None).unwrap());
    }
}
