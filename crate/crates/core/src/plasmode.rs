//! The two plasmode resampling frameworks.
//!
//! Sample Treatment resamples `(W, A)` pairs from the source and generates
//! `Y`; Generate Treatment resamples `W` only and generates both `A` and
//! `Y`. Each replicate consumes its own random stream.

use rand::Rng;

use crate::datamodel::{Dataset, Framework, Link, ModelSpec, SourceDataset, Term, TruthSet};
use crate::dgm::{source_truths, OutcomeGenerator, ResolvedTreatment, ScenarioSpec, TreatmentModel};
use crate::error::{Error, Result};
use crate::glm::{fit_linear_weighted, fit_logistic_weighted, predict, Weights};

/// Where a generating model comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelSource {
    /// The scenario's data-generating model.
    #[default]
    TrueModel,
    /// The correctly specified working model refit on the source dataset.
    FittedOnSource,
}

impl ModelSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelSource::TrueModel => "true_model",
            ModelSource::FittedOnSource => "fitted_on_source",
        }
    }
}

impl std::str::FromStr for ModelSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true_model" => Ok(ModelSource::TrueModel),
            "fitted_on_source" => Ok(ModelSource::FittedOnSource),
            other => Err(Error::InvalidArgument(format!("unknown model source '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlasmodeConfig {
    pub framework: Framework,
    /// Ignored by Sample Treatment.
    pub ps_for_generation: ModelSource,
    pub outcome_for_generation: ModelSource,
    /// Defaults to the source size.
    pub replicate_size: Option<usize>,
}

impl PlasmodeConfig {
    pub fn new(framework: Framework) -> Self {
        Self {
            framework,
            ps_for_generation: ModelSource::TrueModel,
            outcome_for_generation: ModelSource::TrueModel,
            replicate_size: None,
        }
    }
}

/// One plasmode dataset and the source row behind each of its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub data: Dataset,
    pub source_rows: Vec<usize>,
}

fn bootstrap_rows<R: Rng + ?Sized>(n_source: usize, size: usize, rng: &mut R) -> Result<Vec<usize>> {
    if size == 0 {
        return Err(Error::InvalidArgument("replicate size must be at least 1".into()));
    }
    Ok((0..size).map(|_| rng.random_range(0..n_source)).collect())
}

/// Sample Treatment: resample `(W_i, A_i)` pairs, then draw `Y` from
/// `outcome_model`.
pub fn draw_sample_treatment<R: Rng + ?Sized>(
    source: &SourceDataset,
    outcome_model: &ModelSpec,
    replicate_size: Option<usize>,
    rng: &mut R,
) -> Result<Replicate> {
    let d = &source.data;
    let outcome = OutcomeGenerator::new(outcome_model, d.w.names())?;
    sample_treatment(d, &outcome, replicate_size.unwrap_or(d.n()), rng)
}

/// Generate Treatment: resample `W_i`, draw `A ~ Bernoulli(ps(W))`, then
/// draw `Y` from `outcome_model`.
pub fn draw_generate_treatment<R: Rng + ?Sized>(
    source: &SourceDataset,
    ps_model: &TreatmentModel,
    outcome_model: &ModelSpec,
    replicate_size: Option<usize>,
    rng: &mut R,
) -> Result<Replicate> {
    let d = &source.data;
    let ps = ps_model.resolve(d.w.names())?;
    let outcome = OutcomeGenerator::new(outcome_model, d.w.names())?;
    generate_treatment(d, &ps, &outcome, replicate_size.unwrap_or(d.n()), rng)
}

fn sample_treatment<R: Rng + ?Sized>(
    d: &Dataset,
    outcome: &OutcomeGenerator,
    size: usize,
    rng: &mut R,
) -> Result<Replicate> {
    let rows = bootstrap_rows(d.n(), size, rng)?;
    let w = d.w.select_rows(&rows);
    let a: Vec<u8> = rows.iter().map(|&i| d.a[i]).collect();
    let y = (0..size)
        .map(|i| outcome.draw(rng, w.row(i), f64::from(a[i])))
        .collect();
    Ok(Replicate {
        data: Dataset::new(w, a, y, outcome.outcome_kind())?,
        source_rows: rows,
    })
}

fn generate_treatment<R: Rng + ?Sized>(
    d: &Dataset,
    ps: &ResolvedTreatment,
    outcome: &OutcomeGenerator,
    size: usize,
    rng: &mut R,
) -> Result<Replicate> {
    let rows = bootstrap_rows(d.n(), size, rng)?;
    let w = d.w.select_rows(&rows);
    let mut a = Vec::with_capacity(size);
    let mut y = Vec::with_capacity(size);
    for i in 0..size {
        let ai = crate::dgm::bernoulli(rng, ps.probability(w.row(i)));
        a.push(ai as u8);
        y.push(outcome.draw(rng, w.row(i), ai));
    }
    Ok(Replicate {
        data: Dataset::new(w, a, y, outcome.outcome_kind())?,
        source_rows: rows,
    })
}

/// The generating models for one source, resolved once and shared by every
/// replicate, together with the truths they imply.
#[derive(Debug, Clone)]
pub struct GenerationModels {
    pub treatment: TreatmentModel,
    pub outcome: ModelSpec,
    pub truths: TruthSet,
    ps: ResolvedTreatment,
    outcome_gen: OutcomeGenerator,
}

impl GenerationModels {
    /// Picks true or source-fitted models per `config`. Truths are always
    /// those of the outcome model actually used for generation.
    pub fn prepare(spec: &ScenarioSpec, source: &SourceDataset, config: &PlasmodeConfig) -> Result<Self> {
        let d = &source.data;
        let treatment = match config.ps_for_generation {
            ModelSource::TrueModel => spec.treatment.clone(),
            ModelSource::FittedOnSource => {
                let fit = fit_logistic_weighted(d, &d.treatment_f64(), &spec.treatment.design(), Weights::Uniform)?;
                if !fit.converged {
                    return Err(Error::InvalidScenario("propensity model did not converge on the source".into()));
                }
                TreatmentModel::Logit(fit.spec)
            }
        };
        let outcome = match config.outcome_for_generation {
            ModelSource::TrueModel => spec.outcome.clone(),
            ModelSource::FittedOnSource => fit_outcome_on_source(d, &spec.outcome.design(), spec.outcome.link)?,
        };
        let truths = if config.outcome_for_generation == ModelSource::TrueModel {
            source.truths
        } else {
            source_truths(&d.w, &outcome, spec.msm_design.as_deref())?
        };
        Ok(Self {
            ps: treatment.resolve(d.w.names())?,
            outcome_gen: OutcomeGenerator::new(&outcome, d.w.names())?,
            treatment,
            outcome,
            truths,
        })
    }

    /// Draws replicate data for `framework` from `source`.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        source: &SourceDataset,
        framework: Framework,
        replicate_size: Option<usize>,
        rng: &mut R,
    ) -> Result<Replicate> {
        let d = &source.data;
        let size = replicate_size.unwrap_or(d.n());
        match framework {
            Framework::SampleTreatment => sample_treatment(d, &self.outcome_gen, size, rng),
            Framework::GenerateTreatment => generate_treatment(d, &self.ps, &self.outcome_gen, size, rng),
        }
    }
}

fn fit_outcome_on_source(d: &Dataset, design: &[Term], link: Link) -> Result<ModelSpec> {
    match link {
        Link::Logit => {
            let fit = fit_logistic_weighted(d, &d.y, design, Weights::Uniform)?;
            if !fit.converged {
                return Err(Error::InvalidScenario("outcome model did not converge on the source".into()));
            }
            Ok(fit.spec)
        }
        Link::Identity => {
            let fit = fit_linear_weighted(d, design, Weights::Uniform)?;
            let fitted = predict(&fit, d, None)?;
            let rss: f64 = d.y.iter().zip(&fitted).map(|(y, f)| (y - f).powi(2)).sum();
            let dof = d.n().saturating_sub(design.len() + 1).max(1);
            let sd = (rss / dof as f64).sqrt();
            Ok(fit.spec.with_noise_sd(sd))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Covariates, OutcomeKind};
    use crate::dgm::{builtin, generate_source};
    use crate::rng::{Purpose, RngStream};
    use std::collections::HashMap;

    fn rng(i: u64) -> rand_chacha::ChaCha8Rng {
        RngStream::new(42, Purpose::Custom(1), i).rng()
    }

    fn s1_source(n: usize) -> SourceDataset {
        generate_source(&builtin("S1").unwrap(), n, 17).unwrap()
    }

    #[test]
    fn sample_treatment_copies_pairs_verbatim() {
        let src = s1_source(200);
        let r = draw_sample_treatment(&src, &builtin("S1").unwrap().outcome, None, &mut rng(0)).unwrap();
        assert_eq!(r.data.n(), 200);
        for (i, &s) in r.source_rows.iter().enumerate() {
            assert_eq!(r.data.w.row(i), src.data.w.row(s));
            assert_eq!(r.data.a[i], src.data.a[s]);
        }
    }

    #[test]
    fn sample_treatment_all_treated_stays_treated() {
        let mut src = s1_source(50);
        src.data.a = vec![1; 50];
        let r = draw_sample_treatment(&src, &builtin("S1").unwrap().outcome, None, &mut rng(1)).unwrap();
        assert!(r.data.a.iter().all(|&a| a == 1));
    }

    #[test]
    fn deterministic_outcome_map() {
        let src = s1_source(100);
        let y_is_a = ModelSpec::parse(0.0, &[("A", 1.0)], Link::Identity).unwrap().with_noise_sd(0.0);
        let r = draw_sample_treatment(&src, &y_is_a, None, &mut rng(2)).unwrap();
        assert_eq!(r.data.y, r.data.treatment_f64());
    }

    #[test]
    fn sample_treatment_groups_have_constant_treatment() {
        let src = s1_source(100);
        let r = draw_sample_treatment(&src, &builtin("S1").unwrap().outcome, None, &mut rng(3)).unwrap();
        let mut seen: HashMap<usize, u8> = HashMap::new();
        for (i, &s) in r.source_rows.iter().enumerate() {
            assert_eq!(*seen.entry(s).or_insert(r.data.a[i]), r.data.a[i]);
        }
    }

    #[test]
    fn generate_treatment_intercept_zero_is_half() {
        let src = s1_source(10_000);
        let ps = TreatmentModel::Logit(ModelSpec::new(0.0, vec![], Link::Logit));
        let r = draw_generate_treatment(&src, &ps, &builtin("S1").unwrap().outcome, None, &mut rng(4)).unwrap();
        let frac = r.data.n_treated() as f64 / 1e4;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn generate_treatment_saturated_ps_treats_everyone() {
        let src = s1_source(500);
        let ps = TreatmentModel::Logit(ModelSpec::new(30.0, vec![], Link::Logit));
        let r = draw_generate_treatment(&src, &ps, &builtin("S1").unwrap().outcome, None, &mut rng(5)).unwrap();
        assert!(r.data.a.iter().all(|&a| a == 1));
    }

    #[test]
    fn generate_treatment_frequencies_match_expit() {
        let w = Covariates::from_columns(vec!["x".into()], &[vec![-2.0, -0.5, 0.0, 0.7, 2.5]]).unwrap();
        let data = Dataset::new(w, vec![0, 1, 0, 1, 0], vec![0.0; 5], OutcomeKind::Binary).unwrap();
        let src = SourceDataset {
            data,
            scenario_id: "toy".into(),
            seed: 0,
            truths: TruthSet::from_means(0.0, 0.0, OutcomeKind::Binary),
        };
        let lp = ModelSpec::parse(0.1, &[("x", 0.8)], Link::Logit).unwrap();
        let ps = TreatmentModel::Logit(lp.clone());
        let y = ModelSpec::new(0.0, vec![], Link::Logit);
        let mut r = rng(6);
        let (mut hits, mut counts) = ([0.0f64; 5], [0.0f64; 5]);
        for _ in 0..100_000 {
            let rep = draw_generate_treatment(&src, &ps, &y, None, &mut r).unwrap();
            for (i, &s) in rep.source_rows.iter().enumerate() {
                counts[s] += 1.0;
                hits[s] += f64::from(rep.data.a[i]);
            }
        }
        let expected = lp.mean(&src.data, None).unwrap();
        for i in 0..5 {
            assert!((hits[i] / counts[i] - expected[i]).abs() < 0.005, "row {i}");
        }
    }

    #[test]
    fn generate_treatment_eventually_sees_both_arms_per_row() {
        let spec = builtin("S1").unwrap();
        let src = generate_source(&spec, 100, 3).unwrap();
        let gm = GenerationModels::prepare(&spec, &src, &PlasmodeConfig::new(Framework::GenerateTreatment)).unwrap();
        let mut seen = [[false; 2]; 100];
        for r in 0..1000 {
            let rep = gm.draw(&src, Framework::GenerateTreatment, None, &mut rng(100 + r)).unwrap();
            for (i, &s) in rep.source_rows.iter().enumerate() {
                seen[s][rep.data.a[i] as usize] = true;
            }
        }
        assert!(seen.iter().all(|s| s[0] && s[1]));
    }

    #[test]
    fn fitted_on_source_outcome_changes_truths() {
        let spec = builtin("S1").unwrap();
        let src = generate_source(&spec, 300, 8).unwrap();
        let mut cfg = PlasmodeConfig::new(Framework::GenerateTreatment);
        cfg.outcome_for_generation = ModelSource::FittedOnSource;
        cfg.ps_for_generation = ModelSource::FittedOnSource;
        let gm = GenerationModels::prepare(&spec, &src, &cfg).unwrap();
        let coef_a = gm.outcome.coefficient_of(&Term::Treatment).unwrap();
        assert!((gm.truths.ate - coef_a).abs() < 1e-10);
        assert!(gm.outcome.noise_sd.unwrap() > 0.8);
        assert!(matches!(gm.treatment, TreatmentModel::Logit(_)));
    }
}
