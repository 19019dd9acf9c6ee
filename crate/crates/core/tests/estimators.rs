use plasmode_core::datamodel::{Covariates, Dataset, OutcomeKind, Term};
use plasmode_core::estimators::{estimate_glm_cm, estimate_iptw, estimate_match, estimate_unadj, match_weights, WorkingModels};

#[test]
fn matching_weights_by_hand() {
    // treated at 0, 1, 3; controls at 0.4, 0.6, 2, 2.9, 5
    let a = [1, 1, 1, 0, 0, 0, 0, 0];
    let s = [0.0, 1.0, 3.0, 0.4, 0.6, 2.0, 2.9, 5.0];
    let m = match_weights(&a, &s);
    // the control at 2 is equidistant from the treated at 1 and 3
    assert_eq!(m.matched, vec![3, 4, 6, 0, 1, 1, 2, 2]);
    assert_eq!(m.weights, vec![2.0, 3.0, 3.0, 2.0, 2.0, 1.0, 2.0, 1.0]);
}

#[test]
fn matched_twins_weigh_two_each() {
    let a = [1, 0, 1, 0, 1, 0, 1, 0];
    let s = [0.1, 0.1, 0.5, 0.5, 0.9, 0.9, 1.4, 1.4];
    let m = match_weights(&a, &s);
    assert_eq!(m.matched, vec![1, 0, 3, 2, 5, 4, 7, 6]);
    assert!(m.weights.iter().all(|&w| w == 2.0));
}

#[test]
fn matching_on_a_constant_score_uses_lowest_index() {
    let w = Covariates::from_columns(vec!["x".into()], &[vec![0.3, -0.1, 0.8, 0.2, -0.5, 1.1]]).unwrap();
    let d = Dataset::new(w, vec![0, 1, 1, 0, 0, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], OutcomeKind::Continuous).unwrap();
    let wm = WorkingModels {
        ps_design: vec![],
        outcome_design: vec![Term::Treatment],
        msm_design: None,
    };
    let e = estimate_match(&d, &wm);
    // row 1 absorbs all three controls, row 0 all three treated
    assert!((e.ey1 - 17.0 / 6.0).abs() < 1e-12, "{}", e.ey1);
    assert!((e.ey0 - 13.0 / 6.0).abs() < 1e-12, "{}", e.ey0);
    assert!((e.ate - 4.0 / 6.0).abs() < 1e-12);
}

#[test]
fn saturated_glm_cm_is_cell_standardization() {
    let wv = vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
    let a = vec![1, 0, 1, 0, 1, 1, 0, 0, 1, 0];
    let y = vec![2.5, 1.0, 3.5, 0.0, 7.0, 6.0, 2.0, 4.0, 8.0, 3.0];
    let w = Covariates::from_columns(vec!["w".into()], std::slice::from_ref(&wv)).unwrap();
    let d = Dataset::new(w, a.clone(), y.clone(), OutcomeKind::Continuous).unwrap();
    let wm = WorkingModels {
        ps_design: vec![Term::covariate("w")],
        outcome_design: vec![Term::Treatment, Term::covariate("w"), "A*w".parse().unwrap()],
        msm_design: None,
    };
    let cell = |arm: u8, level: f64| {
        let v: Vec<f64> = (0..10).filter(|&i| a[i] == arm && wv[i] == level).map(|i| y[i]).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let ey1 = 0.4 * cell(1, 0.0) + 0.6 * cell(1, 1.0);
    let ey0 = 0.4 * cell(0, 0.0) + 0.6 * cell(0, 1.0);
    let e = estimate_glm_cm(&d, &wm);
    assert!((e.ey1 - ey1).abs() < 1e-12 && (e.ey0 - ey0).abs() < 1e-12, "{e:?}");
    assert!(e.converged);
}

#[test]
fn iptw_with_constant_score_is_difference_in_means() {
    let w = Covariates::from_columns(vec!["x".into()], &[vec![0.3, -0.1, 0.8, 0.2, -0.5, 1.1, 0.0]]).unwrap();
    let d = Dataset::new(
        w,
        vec![0, 1, 1, 0, 0, 1, 1],
        vec![1.0, 2.0, 3.5, 4.0, 5.0, 6.0, -1.0],
        OutcomeKind::Continuous,
    )
    .unwrap();
    let wm = WorkingModels {
        ps_design: vec![],
        outcome_design: vec![Term::Treatment, Term::covariate("x")],
        msm_design: None,
    };
    let (i, u) = (estimate_iptw(&d, &wm), estimate_unadj(&d));
    assert!((i.ey1 - u.ey1).abs() < 1e-12 && (i.ey0 - u.ey0).abs() < 1e-12 && (i.ate - u.ate).abs() < 1e-12);
}
