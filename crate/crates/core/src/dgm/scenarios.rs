use super::{CovariateGenerator, CovariateLaw, ScenarioSpec, TreatmentModel};
use crate::datamodel::{Link, ModelSpec, Term};
use crate::error::{Error, Result};

/// Ids accepted by [`builtin`].
pub const BUILTIN_IDS: &[&str] = &["S1", "S1a", "S2", "S2a", "S3", "S4a", "S4b"];

fn normal(name: &str, mean: f64, sd: f64) -> CovariateGenerator {
    CovariateGenerator::Normal {
        name: name.into(),
        mean,
        sd,
    }
}

fn base_covariates() -> Vec<CovariateGenerator> {
    vec![
        normal("W1", 0.0, 1.0),
        normal("W2", 0.5, 1.0),
        CovariateGenerator::Bernoulli {
            name: "W3".into(),
            p: 0.4,
        },
    ]
}

fn logit_model(intercept: f64, terms: &[(&str, f64)]) -> ModelSpec {
    ModelSpec::parse(intercept, terms, Link::Logit).expect("built-in terms parse")
}

fn ps_s12() -> TreatmentModel {
    TreatmentModel::Logit(logit_model(-0.48, &[("W1", 0.96), ("W2", 0.012), ("W3", 1.08)]))
}

fn outcome_s1() -> ModelSpec {
    ModelSpec::parse(
        10.0,
        &[("A", 2.0), ("W1", 1.0), ("W2", 0.7), ("W3", 0.02)],
        Link::Identity,
    )
    .expect("built-in terms parse")
    .with_noise_sd(1.0)
}

fn outcome_s2() -> ModelSpec {
    logit_model(-1.8, &[("A", 1.1), ("W1", 0.24), ("W2", 0.08), ("W3", 0.8)])
}

fn scenario4(id: &str, msm: &[&str]) -> ScenarioSpec {
    let mut covs = base_covariates();
    covs.push(CovariateGenerator::SumWithNoise {
        name: "W4".into(),
        base: "W3".into(),
        sd: 1.0,
    });
    covs.push(CovariateGenerator::Threshold {
        name: "W5".into(),
        base: "W1".into(),
        cutoff: 0.2,
        above: true,
    });
    ScenarioSpec {
        id: id.into(),
        covariates: CovariateLaw::Generated(covs),
        treatment: TreatmentModel::Logit(logit_model(-0.4, &[("W1", 0.8), ("W2", 0.01), ("W3", 0.9)])),
        outcome: logit_model(
            -2.5,
            &[
                ("A", 1.1),
                ("W1", 0.24),
                ("W2", 0.08),
                ("W3", 0.8),
                ("W4", -0.3),
                ("W5", -0.6),
            ],
        ),
        msm_design: Some(msm.iter().map(|t| t.parse::<Term>().expect("built-in terms parse")).collect()),
    }
}

/// Built-in simulation scenario by id (case-insensitive).
pub fn builtin(id: &str) -> Result<ScenarioSpec> {
    let canonical = BUILTIN_IDS
        .iter()
        .find(|b| b.eq_ignore_ascii_case(id))
        .ok_or_else(|| Error::InvalidScenario(format!("unknown scenario id '{id}'")))?;
    let simple = |treatment, outcome| ScenarioSpec {
        id: canonical.to_string(),
        covariates: CovariateLaw::Generated(base_covariates()),
        treatment,
        outcome,
        msm_design: None,
    };
    let rct = TreatmentModel::Randomized { p: 0.5 };
    Ok(match *canonical {
        "S1" => simple(ps_s12(), outcome_s1()),
        "S1a" => simple(rct, outcome_s1()),
        "S2" => simple(ps_s12(), outcome_s2()),
        "S2a" => simple(rct, outcome_s2()),
        "S3" => simple(
            TreatmentModel::Logit(logit_model(-0.72, &[("W1", -0.72), ("W2", 0.18), ("W3", 0.81)])),
            logit_model(-4.9, &[("A", -2.0), ("W1", 0.4), ("W2", -4.0), ("W3", -3.0)]),
        ),
        "S4a" => scenario4("S4a", &["A", "W1", "W2", "W3", "W4", "W5"]),
        "S4b" => scenario4("S4b", &["A", "W1", "W2", "W3"]),
        _ => unreachable!(),
    })
}
