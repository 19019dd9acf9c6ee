//! Frozen fixtures from `tests/oracles/make_fixtures.py` and deterministic
//! checks shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use plasmode_core::datamodel::{Covariates, Dataset, OutcomeKind, Term};
use plasmode_core::estimators::{estimate_glm_ps, estimate_tmle, tmle_bound, tmle_fit, WorkingModels};
use plasmode_core::glm::{fit_linear_weighted, fit_logistic_weighted, Weights};
use serde_json::Value;

const FIXTURES: &str = include_str!("../fixtures/oracle_fixtures.json");

pub fn fixture(name: &str) -> Value {
    let all: Value = serde_json::from_str(FIXTURES).expect("fixture json");
    all[name].clone()
}

pub fn floats(v: &Value) -> Vec<f64> {
    v.as_array().expect("array").iter().map(|x| x.as_f64().expect("number")).collect()
}

/// Columns in key order, which is the fixture's `x1, x2, ...` order.
pub fn covariates(v: &Value) -> Covariates {
    let cols = v["columns"].as_object().expect("columns");
    let names: Vec<String> = cols.keys().cloned().collect();
    let data: Vec<Vec<f64>> = cols.values().map(floats).collect();
    Covariates::from_columns(names, &data).expect("covariates")
}

/// Dataset from a fixture; a missing treatment column becomes all zeros.
pub fn dataset(v: &Value, kind: OutcomeKind) -> Dataset {
    let w = covariates(v);
    let y = floats(&v["y"]);
    let a = match v.get("a") {
        Some(a) => floats(a).into_iter().map(|x| x as u8).collect(),
        None => vec![0; y.len()],
    };
    Dataset::new(w, a, y, kind).expect("dataset")
}

fn covariate_terms(d: &Dataset) -> Vec<Term> {
    d.w.names().iter().map(|s| Term::covariate(s)).collect()
}

fn close(what: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: got {got:.15e}, want {want:.15e} (tol {tol:e})"))
    }
}

fn close_all(what: &str, got: &[f64], want: &[f64], tol: f64) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("{what}: length {} vs {}", got.len(), want.len()));
    }
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        close(&format!("{what}[{i}]"), *g, *w, tol)?;
    }
    Ok(())
}

pub fn check_wls() -> Result<(), String> {
    let f = fixture("wls_20");
    let d = dataset(&f, OutcomeKind::Continuous);
    let w = floats(&f["weights"]);
    let fit = fit_linear_weighted(&d, &covariate_terms(&d), Weights::Values(&w)).map_err(|e| e.to_string())?;
    close_all("wls", &fit.spec.coefficients(), &floats(&f["coefficients"]), 1e-10)
}

pub fn check_logistic() -> Result<(), String> {
    let f = fixture("logistic_25");
    let d = dataset(&f, OutcomeKind::Binary);
    let fit = fit_logistic_weighted(&d, &d.y, &covariate_terms(&d), Weights::Uniform).map_err(|e| e.to_string())?;
    if !fit.converged {
        return Err("logistic fit did not converge".into());
    }
    close_all("logistic", &fit.spec.coefficients(), &floats(&f["coefficients"]), 1e-6)
}

pub fn glm_ps_models() -> WorkingModels {
    WorkingModels {
        ps_design: vec![Term::covariate("x1"), Term::covariate("x2")],
        outcome_design: vec![Term::Treatment, Term::covariate("x1"), Term::covariate("x2")],
        msm_design: None,
    }
}

pub fn check_glm_ps() -> Result<(), String> {
    let f = fixture("glm_ps_30");
    let d = dataset(&f, OutcomeKind::Continuous);
    let e = estimate_glm_ps(&d, &glm_ps_models());
    close("glm_ps ey1", e.ey1, f["ey1"].as_f64().unwrap(), 1e-8)?;
    close("glm_ps ey0", e.ey0, f["ey0"].as_f64().unwrap(), 1e-8)?;
    close("glm_ps ate", e.ate, f["ate"].as_f64().unwrap(), 1e-8)
}

pub fn tmle_models() -> WorkingModels {
    WorkingModels {
        ps_design: vec![Term::covariate("x")],
        outcome_design: vec![Term::Treatment, Term::covariate("x")],
        msm_design: None,
    }
}

pub fn check_tmle() -> Result<(), String> {
    let f = fixture("tmle_40");
    let d = dataset(&f, OutcomeKind::Binary);
    close("tmle bound", tmle_bound(d.n()), f["bound"].as_f64().unwrap(), 1e-15)?;
    let fit = tmle_fit(&d, &tmle_models()).map_err(|e| e.to_string())?;
    close_all("tmle epsilon", &fit.epsilon, &floats(&f["epsilon"]), 1e-6)?;
    let s = fit.score(&d.a);
    close("tmle score (treated)", s[0], 0.0, 1e-6)?;
    close("tmle score (control)", s[1], 0.0, 1e-6)?;
    let e = estimate_tmle(&d, &tmle_models());
    close("tmle ey1", e.ey1, f["ey1"].as_f64().unwrap(), 1e-6)?;
    close("tmle ey0", e.ey0, f["ey0"].as_f64().unwrap(), 1e-6)?;
    close("tmle ate", e.ate, f["ate"].as_f64().unwrap(), 1e-6)
}
