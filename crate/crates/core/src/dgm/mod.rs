//! Data-generating mechanisms: scenario specifications, source-dataset
//! generation, plasmode truths and the stacked-regression MSM truth.

mod scenarios;

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::datamodel::{
    Covariates, Dataset, Link, ModelSpec, OutcomeKind, ResolvedDesign, ResolvedModel,
    SourceDataset, Term, TruthSet,
};
use crate::error::{Error, Result};
use crate::estimators::WorkingModels;
use crate::glm::{logistic_irls, Weights};
use crate::rng::{Purpose, RngStream};

pub use scenarios::{builtin, BUILTIN_IDS};

/// Law of one generated covariate column.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateGenerator {
    Normal { name: String, mean: f64, sd: f64 },
    Bernoulli { name: String, p: f64 },
    /// `base + N(0, sd)`, where `base` is an earlier column.
    SumWithNoise { name: String, base: String, sd: f64 },
    /// `1{base > cutoff}` (or `<` when `above` is false).
    Threshold {
        name: String,
        base: String,
        cutoff: f64,
        above: bool,
    },
}

impl CovariateGenerator {
    pub fn name(&self) -> &str {
        match self {
            CovariateGenerator::Normal { name, .. }
            | CovariateGenerator::Bernoulli { name, .. }
            | CovariateGenerator::SumWithNoise { name, .. }
            | CovariateGenerator::Threshold { name, .. } => name,
        }
    }
}

/// How the covariate matrix of a source is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateLaw {
    /// Columns drawn row by row from the listed generators.
    Generated(Vec<CovariateGenerator>),
    /// Rows resampled with replacement from a fixed covariate matrix.
    Bootstrap(Arc<Covariates>),
}

impl CovariateLaw {
    pub fn names(&self) -> Vec<String> {
        match self {
            CovariateLaw::Generated(gens) => gens.iter().map(|g| g.name().to_string()).collect(),
            CovariateLaw::Bootstrap(c) => c.names().to_vec(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            CovariateLaw::Generated(gens) => {
                if gens.is_empty() {
                    return Err(Error::InvalidScenario("no covariate generators".into()));
                }
                for (k, g) in gens.iter().enumerate() {
                    if gens[..k].iter().any(|h| h.name() == g.name()) || g.name() == "A" {
                        return Err(Error::InvalidScenario(format!("duplicate or reserved covariate '{}'", g.name())));
                    }
                    let ok = match g {
                        CovariateGenerator::Normal { mean, sd, .. } => mean.is_finite() && sd.is_finite() && *sd >= 0.0,
                        CovariateGenerator::Bernoulli { p, .. } => (0.0..=1.0).contains(p),
                        CovariateGenerator::SumWithNoise { base, sd, .. } => {
                            gens[..k].iter().any(|h| h.name() == base) && sd.is_finite() && *sd >= 0.0
                        }
                        CovariateGenerator::Threshold { base, cutoff, .. } => {
                            gens[..k].iter().any(|h| h.name() == base) && cutoff.is_finite()
                        }
                    };
                    if !ok {
                        return Err(Error::InvalidScenario(format!("bad generator for '{}'", g.name())));
                    }
                }
                Ok(())
            }
            CovariateLaw::Bootstrap(c) => {
                if c.nrows() == 0 || c.ncols() == 0 {
                    Err(Error::InvalidScenario("empty covariate source".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Draws `n` covariate rows.
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Covariates {
        match self {
            CovariateLaw::Bootstrap(src) => {
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..src.nrows())).collect();
                src.select_rows(&idx)
            }
            CovariateLaw::Generated(gens) => {
                let p = gens.len();
                let base_idx: Vec<usize> = gens
                    .iter()
                    .map(|g| match g {
                        CovariateGenerator::SumWithNoise { base, .. }
                        | CovariateGenerator::Threshold { base, .. } => {
                            gens.iter().position(|h| h.name() == base).unwrap_or(0)
                        }
                        _ => 0,
                    })
                    .collect();
                let mut data = vec![0.0; n * p];
                for row in data.chunks_exact_mut(p) {
                    for (j, g) in gens.iter().enumerate() {
                        row[j] = match g {
                            CovariateGenerator::Normal { mean, sd, .. } => {
                                mean + sd * rng.sample::<f64, _>(StandardNormal)
                            }
                            CovariateGenerator::Bernoulli { p, .. } => bernoulli(rng, *p),
                            CovariateGenerator::SumWithNoise { sd, .. } => {
                                row[base_idx[j]] + sd * rng.sample::<f64, _>(StandardNormal)
                            }
                            CovariateGenerator::Threshold { cutoff, above, .. } => {
                                let b = row[base_idx[j]];
                                let hit = if *above { b > *cutoff } else { b < *cutoff };
                                f64::from(u8::from(hit))
                            }
                        };
                    }
                }
                Covariates::new(self.names(), data).expect("generated covariates are finite")
            }
        }
    }
}

#[inline]
pub(crate) fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// Treatment assignment mechanism.
#[derive(Debug, Clone, PartialEq)]
pub enum TreatmentModel {
    Logit(ModelSpec),
    Randomized { p: f64 },
}

impl TreatmentModel {
    /// Equivalent logit model (intercept-only for randomized assignment).
    pub fn as_model_spec(&self) -> ModelSpec {
        match self {
            TreatmentModel::Logit(m) => m.clone(),
            TreatmentModel::Randomized { p } => ModelSpec::new(crate::datamodel::logit(*p), vec![], Link::Logit),
        }
    }

    /// Design the estimators fit for the propensity score.
    pub fn design(&self) -> Vec<Term> {
        match self {
            TreatmentModel::Logit(m) => m.design(),
            TreatmentModel::Randomized { .. } => vec![],
        }
    }

    pub fn resolve(&self, names: &[String]) -> Result<ResolvedTreatment> {
        Ok(match self {
            TreatmentModel::Logit(m) => ResolvedTreatment::Model(m.resolve(names)?),
            TreatmentModel::Randomized { p } => ResolvedTreatment::Constant(*p),
        })
    }
}

/// A treatment model bound to a covariate layout.
#[derive(Debug, Clone)]
pub enum ResolvedTreatment {
    Model(ResolvedModel),
    Constant(f64),
}

impl ResolvedTreatment {
    #[inline]
    pub fn probability(&self, w: &[f64]) -> f64 {
        match self {
            ResolvedTreatment::Model(m) => m.mean(w, 0.0),
            ResolvedTreatment::Constant(p) => *p,
        }
    }
}

/// An outcome model bound to a covariate layout, ready for generation.
#[derive(Debug, Clone)]
pub struct OutcomeGenerator {
    model: ResolvedModel,
    noise_sd: f64,
}

impl OutcomeGenerator {
    pub fn new(spec: &ModelSpec, names: &[String]) -> Result<Self> {
        let noise_sd = match spec.link {
            Link::Identity => spec
                .noise_sd
                .ok_or_else(|| Error::InvalidScenario("identity outcome model needs noise_sd".into()))?,
            Link::Logit => 0.0,
        };
        Ok(Self {
            model: spec.resolve(names)?,
            noise_sd,
        })
    }

    #[inline]
    pub fn mean(&self, w: &[f64], a: f64) -> f64 {
        self.model.mean(w, a)
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, w: &[f64], a: f64) -> f64 {
        let m = self.model.mean(w, a);
        match self.model.link {
            Link::Logit => bernoulli(rng, m),
            Link::Identity if self.noise_sd == 0.0 => m,
            Link::Identity => m + self.noise_sd * rng.sample::<f64, _>(StandardNormal),
        }
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.model.link.outcome_kind()
    }
}

/// Full data-generating mechanism of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub id: String,
    pub covariates: CovariateLaw,
    pub treatment: TreatmentModel,
    pub outcome: ModelSpec,
    pub msm_design: Option<Vec<Term>>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        self.covariates.validate()?;
        let names = self.covariates.names();
        match &self.treatment {
            TreatmentModel::Randomized { p } if !(*p > 0.0 && *p < 1.0) => {
                return Err(Error::InvalidScenario(format!("randomized p = {p} not in (0, 1)")));
            }
            TreatmentModel::Logit(m) => {
                if m.link != Link::Logit {
                    return Err(Error::InvalidScenario("propensity model must use the logit link".into()));
                }
                if m.terms.iter().any(|(t, _)| t.involves_treatment()) {
                    return Err(Error::InvalidScenario("propensity model cannot depend on A".into()));
                }
                m.resolve(&names)?;
            }
            _ => {}
        }
        match (self.outcome.link, self.outcome.noise_sd) {
            (Link::Identity, None) => {
                return Err(Error::InvalidScenario("identity outcome model needs noise_sd".into()))
            }
            (Link::Identity, Some(sd)) if !(sd.is_finite() && sd >= 0.0) => {
                return Err(Error::InvalidScenario(format!("noise_sd = {sd}")))
            }
            (Link::Logit, Some(_)) => {
                return Err(Error::InvalidScenario("noise_sd only applies to identity outcome models".into()))
            }
            _ => {}
        }
        self.outcome.resolve(&names)?;
        if let Some(msm) = &self.msm_design {
            if self.outcome.link != Link::Logit {
                return Err(Error::InvalidScenario("an MSM requires a binary outcome".into()));
            }
            if !msm.contains(&Term::Treatment) {
                return Err(Error::InvalidScenario("MSM design must include A".into()));
            }
            ResolvedDesign::resolve(msm, &names)?;
        }
        Ok(())
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome.link.outcome_kind()
    }

    /// Correctly specified working models for the estimators.
    pub fn working_models(&self) -> WorkingModels {
        WorkingModels {
            ps_design: self.treatment.design(),
            outcome_design: self.outcome.design(),
            msm_design: self.msm_design.clone(),
        }
    }
}

/// Draws a source dataset and fills in its truths. Deterministic in
/// `(spec, n, seed)`.
pub fn generate_source(spec: &ScenarioSpec, n: usize, seed: u64) -> Result<SourceDataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("source size must be at least 1".into()));
    }
    spec.validate()?;
    let mut rng = RngStream::new(seed, Purpose::Source, 0).rng();
    let w = spec.covariates.generate(n, &mut rng);
    let ps = spec.treatment.resolve(w.names())?;
    let a: Vec<u8> = (0..n)
        .map(|i| bernoulli(&mut rng, ps.probability(w.row(i))) as u8)
        .collect();
    let outcome = OutcomeGenerator::new(&spec.outcome, w.names())?;
    let y: Vec<f64> = (0..n)
        .map(|i| outcome.draw(&mut rng, w.row(i), f64::from(a[i])))
        .collect();
    let data = Dataset::new(w, a, y, spec.outcome_kind())?;
    let truths = source_truths(&data.w, &spec.outcome, spec.msm_design.as_deref())?;
    Ok(SourceDataset {
        data,
        scenario_id: spec.id.clone(),
        seed,
        truths,
    })
}

/// Sample averages of `outcome(1, W_i)`, `outcome(0, W_i)` and of their
/// per-row difference over `w`.
///
/// The difference is accumulated row by row from the design columns, so
/// terms that do not involve A cancel exactly and an additive constant
/// effect is reproduced without rounding.
pub fn counterfactual_means(w: &Covariates, outcome: &ModelSpec) -> Result<(f64, f64, f64)> {
    let m = outcome.resolve(w.names())?;
    let k = m.design.width();
    let (mut x1, mut x0) = (vec![0.0; k], vec![0.0; k]);
    let n = w.nrows() as f64;
    let (mut s1, mut s0, mut sd) = (0.0, 0.0, 0.0);
    for i in 0..w.nrows() {
        m.design.fill_row(w.row(i), 1.0, &mut x1);
        m.design.fill_row(w.row(i), 0.0, &mut x0);
        let eta1: f64 = x1.iter().zip(&m.coefs).map(|(x, c)| x * c).sum();
        let eta0: f64 = x0.iter().zip(&m.coefs).map(|(x, c)| x * c).sum();
        let (q1, q0) = (m.link.inverse(eta1), m.link.inverse(eta0));
        s1 += q1;
        s0 += q0;
        sd += match m.link {
            Link::Identity => x1.iter().zip(&x0).zip(&m.coefs).map(|((a, b), c)| (a - b) * c).sum::<f64>(),
            Link::Logit => q1 - q0,
        };
    }
    Ok((s1 / n, s0 / n, sd / n))
}

fn truth_set(w: &Covariates, outcome: &ModelSpec) -> Result<TruthSet> {
    let (ey1, ey0, ate) = counterfactual_means(w, outcome)?;
    let mut t = TruthSet::from_means(ey1, ey0, outcome.link.outcome_kind());
    t.ate = ate;
    Ok(t)
}

/// Plasmode truth set: `ey_a` is the average of the true `Q(a, W_i)` over the
/// rows of `data`.
pub fn compute_truths(data: &Dataset, outcome_model: &ModelSpec) -> Result<TruthSet> {
    truth_set(&data.w, outcome_model)
}

/// Truths for a fixed covariate sample, including the MSM log odds ratio
/// when an MSM design is given.
pub fn source_truths(w: &Covariates, outcome: &ModelSpec, msm_design: Option<&[Term]>) -> Result<TruthSet> {
    let mut t = truth_set(w, outcome)?;
    if let Some(design) = msm_design {
        let gamma = msm_projection(w, outcome, design)?;
        let k = design.iter().position(|t| *t == Term::Treatment).expect("validated");
        t.logcor = Some(gamma[k + 1]);
    }
    Ok(t)
}

/// Projection of the outcome model onto an MSM over a covariate sample: the
/// unweighted logistic fit of the stacked counterfactual probabilities
/// `Q(0, W_i)` (with A = 0) and `Q(1, W_i)` (with A = 1) on `msm_design`.
/// Returns `[intercept, coefficients...]`.
pub fn msm_projection(w: &Covariates, outcome: &ModelSpec, msm_design: &[Term]) -> Result<Vec<f64>> {
    let n = w.nrows();
    let m = outcome.resolve(w.names())?;
    let idx: Vec<usize> = (0..n).chain(0..n).collect();
    let stacked = w.select_rows(&idx);
    let y: Vec<f64> = (0..2 * n)
        .map(|i| m.mean(stacked.row(i), if i < n { 0.0 } else { 1.0 }))
        .collect();
    let x = ResolvedDesign::resolve(msm_design, w.names())?
        .matrix_from(&stacked, |i| if i < n { 0.0 } else { 1.0 });
    let fit = logistic_irls(&x, &y, Weights::Uniform, None)?;
    if !fit.converged {
        return Err(Error::MsmTruthConvergence { failed: 1, reps: 1 });
    }
    Ok(fit.coefficients)
}

/// Monte Carlo estimate of the population MSM coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MsmTruth {
    /// `[intercept, coefficients...]` in MSM design order.
    pub coefficients: Vec<f64>,
    pub mc_se: Vec<f64>,
    pub reps_used: usize,
    pub failed: usize,
}

/// Stacked-regression truth: draw `n_big` covariate rows, project the true
/// outcome model onto the MSM, repeat `reps` times and average.
pub fn compute_msm_truth(spec: &ScenarioSpec, n_big: usize, reps: usize, seed: u64) -> Result<MsmTruth> {
    spec.validate()?;
    let design = spec
        .msm_design
        .as_deref()
        .ok_or_else(|| Error::InvalidScenario(format!("scenario {} has no MSM", spec.id)))?;
    if n_big == 0 || reps == 0 {
        return Err(Error::InvalidArgument("n_big and reps must be positive".into()));
    }
    let fits: Vec<Option<Vec<f64>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(seed, Purpose::MsmTruth, r as u64).rng();
            let w = spec.covariates.generate(n_big, &mut rng);
            match msm_projection(&w, &spec.outcome, design) {
                Ok(g) => Ok(Some(g)),
                Err(Error::MsmTruthConvergence { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let ok: Vec<Vec<f64>> = fits.into_iter().flatten().collect();
    let failed = reps - ok.len();
    if failed * 100 > reps || ok.is_empty() {
        return Err(Error::MsmTruthConvergence { failed, reps });
    }
    let k = ok[0].len();
    let m = ok.len() as f64;
    let mean: Vec<f64> = (0..k).map(|j| ok.iter().map(|g| g[j]).sum::<f64>() / m).collect();
    let mc_se = (0..k)
        .map(|j| {
            if ok.len() < 2 {
                return f64::NAN;
            }
            let ss: f64 = ok.iter().map(|g| (g[j] - mean[j]).powi(2)).sum();
            (ss / (m - 1.0)).sqrt() / m.sqrt()
        })
        .collect();
    Ok(MsmTruth {
        coefficients: mean,
        mc_se,
        reps_used: ok.len(),
        failed,
    })
}

/// A scenario whose covariates are bootstrapped from a user-supplied matrix
/// and whose treatment and outcome follow the given coefficients.
pub fn build_custom_spec(
    covariate_source: Covariates,
    ps_coeffs: ModelSpec,
    outcome_coeffs: ModelSpec,
) -> Result<ScenarioSpec> {
    let spec = ScenarioSpec {
        id: "custom".into(),
        covariates: CovariateLaw::Bootstrap(Arc::new(covariate_source)),
        treatment: TreatmentModel::Logit(ps_coeffs),
        outcome: outcome_coeffs,
        msm_design: None,
    };
    spec.validate()?;
    Ok(spec)
}
