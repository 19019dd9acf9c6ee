//! Causal-effect estimators. Each maps a replicate dataset plus working-model
//! designs to point estimates of `E[Y(1)]`, `E[Y(0)]` and their contrasts.
//!
//! Fit failures never abort: they yield an [`Estimate`] with
//! `converged = false` and NaN point estimates.

mod matching;
mod tmle;

use std::cell::OnceCell;

use crate::datamodel::{
    Dataset, DesignMatrix, EstimateRecord, EstimatorId, Framework, Link, OutcomeKind, ResolvedDesign, Term,
};
use crate::error::{Error, Result};
use crate::glm::{fit_linear_weighted, fit_logistic_weighted, logistic_irls, predict, wls, FittedGLM, Weights};

pub use matching::{match_weights, MatchResult};
pub use tmle::{tmle_bound, TmleFit, CONTINUOUS_Q_BOUND};

/// Estimator-side model designs (intercepts implied).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorkingModels {
    pub ps_design: Vec<Term>,
    pub outcome_design: Vec<Term>,
    pub msm_design: Option<Vec<Term>>,
}

/// Per-row IPT weights and whether truncation was needed.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub values: Vec<f64>,
    pub cap_applied: bool,
    pub cap_value: f64,
}

/// Upper bound on stabilized weights: `sqrt(n) ln(n) / 5`.
pub fn weight_cap(n: usize) -> f64 {
    let n = n as f64;
    n.sqrt() * n.ln() / 5.0
}

/// Stabilized weights `p/g` (treated) and `(1-p)/(1-g)` (controls), with
/// `p` the treated fraction, truncated at `cap`.
pub fn stabilize(a: &[u8], g: &[f64], cap: f64) -> WeightVector {
    let p = a.iter().filter(|&&x| x == 1).count() as f64 / a.len() as f64;
    let mut cap_applied = false;
    let values = a
        .iter()
        .zip(g)
        .map(|(&ai, &gi)| {
            let w = if ai == 1 { p / gi } else { (1.0 - p) / (1.0 - gi) };
            // a zero denominator gives +inf, which the cap absorbs
            if w > cap || w.is_nan() {
                cap_applied = true;
                cap
            } else {
                w
            }
        })
        .collect();
    WeightVector {
        values,
        cap_applied,
        cap_value: cap,
    }
}

/// Stabilized weights from a fitted propensity model, capped at
/// [`weight_cap`]`(n)`.
pub fn compute_stabilized_weights(d: &Dataset, ps_fit: &FittedGLM, n: usize) -> Result<WeightVector> {
    let g = predict(ps_fit, d, None)?;
    Ok(stabilize(&d.a, &g, weight_cap(n)))
}

/// Point estimates from one estimator on one dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub ey1: f64,
    pub ey0: f64,
    pub ate: f64,
    pub rr: Option<f64>,
    pub logcor: Option<f64>,
    pub converged: bool,
}

impl Estimate {
    pub fn from_means(ey1: f64, ey0: f64, kind: OutcomeKind) -> Self {
        Self {
            ey1,
            ey0,
            ate: ey1 - ey0,
            rr: (kind == OutcomeKind::Binary && ey0 != 0.0).then(|| ey1 / ey0),
            logcor: None,
            converged: true,
        }
    }

    pub fn failed() -> Self {
        Self {
            ey1: f64::NAN,
            ey0: f64::NAN,
            ate: f64::NAN,
            rr: None,
            logcor: None,
            converged: false,
        }
    }

    fn flagged(mut self, converged: bool) -> Self {
        self.converged &= converged;
        self
    }

    pub fn into_record(self, replicate_index: usize, estimator: EstimatorId, framework: Framework) -> EstimateRecord {
        EstimateRecord {
            replicate_index,
            estimator,
            framework,
            ey1: self.ey1,
            ey0: self.ey0,
            ate: self.ate,
            rr: self.rr,
            logcor: self.logcor,
            converged: self.converged,
        }
    }
}

fn arm_counts(d: &Dataset) -> Result<(usize, usize)> {
    let n1 = d.n_treated();
    let n0 = d.n() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::InvalidDataset("a treatment arm is empty".into()));
    }
    Ok((n1, n0))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Propensity fit shared by the weighting and matching estimators.
#[derive(Debug, Clone)]
struct PsFit {
    /// Linear predictor (logit PS) per row.
    lp: Vec<f64>,
    g: Vec<f64>,
    converged: bool,
}

fn fit_ps(d: &Dataset, wm: &WorkingModels) -> Result<PsFit> {
    let fit = fit_logistic_weighted(d, &d.treatment_f64(), &wm.ps_design, Weights::Uniform)?;
    let lp = fit.spec.linear_predictor(d, None)?;
    let g = lp.iter().map(|&e| crate::datamodel::expit(e)).collect();
    Ok(PsFit {
        lp,
        g,
        converged: fit.converged,
    })
}

/// Initial outcome regression evaluated at `A = 1` and `A = 0`.
#[derive(Debug, Clone)]
struct OutcomeFit {
    link: Link,
    /// Linear predictors at `A = 1` and `A = 0`.
    eta1: Vec<f64>,
    eta0: Vec<f64>,
    converged: bool,
}

impl OutcomeFit {
    fn q(&self, a: u8) -> Vec<f64> {
        let eta = if a == 1 { &self.eta1 } else { &self.eta0 };
        eta.iter().map(|&e| self.link.inverse(e)).collect()
    }
}

fn outcome_link(d: &Dataset) -> Link {
    match d.outcome_kind {
        OutcomeKind::Binary => Link::Logit,
        OutcomeKind::Continuous => Link::Identity,
    }
}

fn fit_outcome(d: &Dataset, wm: &WorkingModels) -> Result<OutcomeFit> {
    let link = outcome_link(d);
    let fit = match link {
        Link::Logit => fit_logistic_weighted(d, &d.y, &wm.outcome_design, Weights::Uniform)?,
        Link::Identity => fit_linear_weighted(d, &wm.outcome_design, Weights::Uniform)?,
    };
    Ok(OutcomeFit {
        link,
        eta1: fit.spec.linear_predictor(d, Some(1))?,
        eta0: fit.spec.linear_predictor(d, Some(0))?,
        converged: fit.converged,
    })
}

/// Lazily computed nuisance fits, shared by every estimator run on the
/// same replicate.
struct Nuisance<'a> {
    d: &'a Dataset,
    wm: &'a WorkingModels,
    ps: OnceCell<Option<PsFit>>,
    outcome: OnceCell<Option<OutcomeFit>>,
}

impl<'a> Nuisance<'a> {
    fn new(d: &'a Dataset, wm: &'a WorkingModels) -> Self {
        Self {
            d,
            wm,
            ps: OnceCell::new(),
            outcome: OnceCell::new(),
        }
    }

    fn ps(&self) -> Result<&PsFit> {
        self.ps
            .get_or_init(|| fit_ps(self.d, self.wm).ok())
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("propensity fit failed".into()))
    }

    fn outcome(&self) -> Result<&OutcomeFit> {
        self.outcome
            .get_or_init(|| fit_outcome(self.d, self.wm).ok())
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("outcome fit failed".into()))
    }
}

/// Arm means of `Y`.
pub fn estimate_unadj(d: &Dataset) -> Estimate {
    unadj(d).unwrap_or_else(|_| Estimate::failed())
}

fn unadj(d: &Dataset) -> Result<Estimate> {
    let (n1, n0) = arm_counts(d)?;
    let (mut s1, mut s0) = (0.0, 0.0);
    for (&a, &y) in d.a.iter().zip(&d.y) {
        if a == 1 {
            s1 += y;
        } else {
            s0 += y;
        }
    }
    Ok(Estimate::from_means(s1 / n1 as f64, s0 / n0 as f64, d.outcome_kind))
}

/// Weighted regression of `Y` on `A` alone: returns (ey1, ey0).
fn weighted_arm_regression(d: &Dataset, w: &[f64]) -> Result<(f64, f64)> {
    let a = d.treatment_f64();
    let x = DesignMatrix::with_intercept(&[&a])?;
    let fit = wls(&x, &d.y, Weights::Values(w))?;
    let b = &fit.coefficients;
    Ok((b[0] + b[1], b[0]))
}

fn iptw(nu: &Nuisance) -> Result<Estimate> {
    let d = nu.d;
    arm_counts(d)?;
    let ps = nu.ps()?;
    let w = stabilize(&d.a, &ps.g, weight_cap(d.n()));
    let (ey1, ey0) = weighted_arm_regression(d, &w.values)?;
    Ok(Estimate::from_means(ey1, ey0, d.outcome_kind).flagged(ps.converged))
}

/// Stabilized, capped IPTW: weighted regression of `Y` on `A`.
pub fn estimate_iptw(d: &Dataset, wm: &WorkingModels) -> Estimate {
    iptw(&Nuisance::new(d, wm)).unwrap_or_else(|_| Estimate::failed())
}

fn iptw_ht(nu: &Nuisance) -> Result<Estimate> {
    let d = nu.d;
    let (n1, _) = arm_counts(d)?;
    let ps = nu.ps()?;
    let w = stabilize(&d.a, &ps.g, weight_cap(d.n()));
    let n = d.n() as f64;
    let p = n1 as f64 / n;
    let (mut s1, mut s0) = (0.0, 0.0);
    for i in 0..d.n() {
        if d.a[i] == 1 {
            s1 += w.values[i] * d.y[i];
        } else {
            s0 += w.values[i] * d.y[i];
        }
    }
    // undo the stabilization: w / p = 1 / g for treated rows when uncapped
    let ey1 = s1 / (n * p);
    let ey0 = s0 / (n * (1.0 - p));
    Ok(Estimate::from_means(ey1, ey0, d.outcome_kind).flagged(ps.converged))
}

/// Horvitz-Thompson form `n^-1 sum A Y / g` (and the control analogue),
/// sharing the capped weights of [`estimate_iptw`].
pub fn estimate_iptw_ht(d: &Dataset, wm: &WorkingModels) -> Estimate {
    iptw_ht(&Nuisance::new(d, wm)).unwrap_or_else(|_| Estimate::failed())
}

fn glm_cm(nu: &Nuisance) -> Result<Estimate> {
    let q = nu.outcome()?;
    let ey1 = mean(&q.q(1));
    let ey0 = mean(&q.q(0));
    Ok(Estimate::from_means(ey1, ey0, nu.d.outcome_kind).flagged(q.converged))
}

/// G-computation: standardize the fitted outcome regression over the rows.
pub fn estimate_glm_cm(d: &Dataset, wm: &WorkingModels) -> Estimate {
    glm_cm(&Nuisance::new(d, wm)).unwrap_or_else(|_| Estimate::failed())
}

fn glm_ps(nu: &Nuisance) -> Result<Estimate> {
    let d = nu.d;
    arm_counts(d)?;
    let ps = nu.ps()?;
    let a = d.treatment_f64();
    // an exactly constant score is collinear with the intercept; drop it
    let constant = ps.g.iter().all(|&g| g == ps.g[0]);
    let x = if constant {
        DesignMatrix::with_intercept(&[&a])?
    } else {
        DesignMatrix::with_intercept(&[&a, &ps.g])?
    };
    let link = outcome_link(d);
    let fit = match link {
        Link::Identity => wls(&x, &d.y, Weights::Uniform)?,
        Link::Logit => logistic_irls(&x, &d.y, Weights::Uniform, None)?,
    };
    let b = &fit.coefficients;
    let g_coef = if constant { 0.0 } else { b[2] };
    let n = d.n() as f64;
    let (mut s1, mut s0) = (0.0, 0.0);
    for &g in &ps.g {
        let base = b[0] + g_coef * g;
        s1 += link.inverse(base + b[1]);
        s0 += link.inverse(base);
    }
    Ok(Estimate::from_means(s1 / n, s0 / n, d.outcome_kind).flagged(ps.converged && fit.converged))
}

/// Outcome regression on `A` and the fitted propensity score, standardized.
pub fn estimate_glm_ps(d: &Dataset, wm: &WorkingModels) -> Estimate {
    glm_ps(&Nuisance::new(d, wm)).unwrap_or_else(|_| Estimate::failed())
}

fn msm(nu: &Nuisance) -> Result<Estimate> {
    let d = nu.d;
    arm_counts(d)?;
    let design = nu
        .wm
        .msm_design
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("no MSM design".into()))?;
    if d.outcome_kind != OutcomeKind::Binary {
        return Err(Error::InvalidArgument("the MSM needs a binary outcome".into()));
    }
    let k = design
        .iter()
        .position(|t| *t == Term::Treatment)
        .ok_or_else(|| Error::InvalidArgument("MSM design lacks A".into()))?;
    let ps = nu.ps()?;
    let w = stabilize(&d.a, &ps.g, weight_cap(d.n()));
    let fit = fit_logistic_weighted(d, &d.y, design, Weights::Values(&w.values))?;
    let m = ResolvedDesign::resolve(design, d.w.names())?;
    let coefs = fit.spec.coefficients();
    let n = d.n() as f64;
    let (mut s1, mut s0) = (0.0, 0.0);
    for i in 0..d.n() {
        s1 += crate::datamodel::expit(m.linear_predictor(&coefs, d.w.row(i), 1.0));
        s0 += crate::datamodel::expit(m.linear_predictor(&coefs, d.w.row(i), 0.0));
    }
    let mut e = Estimate::from_means(s1 / n, s0 / n, d.outcome_kind).flagged(ps.converged && fit.converged);
    e.logcor = Some(coefs[k + 1]);
    Ok(e)
}

/// IPT-weighted logistic MSM; `logcor` is the coefficient on `A`.
pub fn estimate_msm_logcor(d: &Dataset, wm: &WorkingModels) -> Estimate {
    msm(&Nuisance::new(d, wm)).unwrap_or_else(|_| Estimate::failed())
}

/// 1-nearest-neighbour matching on the logit propensity score.
pub fn estimate_match(d: &Dataset, wm: &WorkingModels) -> Estimate {
    matching::estimate(&Nuisance::new(d, wm)).unwrap_or_else(|_| Estimate::failed())
}

/// Targeted maximum likelihood with a two-parameter logistic fluctuation.
pub fn estimate_tmle(d: &Dataset, wm: &WorkingModels) -> Estimate {
    tmle::estimate(&Nuisance::new(d, wm)).unwrap_or_else(|_| Estimate::failed())
}

/// The TMLE targeted fit (outcome on the `[0, 1]` fluctuation scale), for
/// checking the efficient-score equation.
pub fn tmle_fit(d: &Dataset, wm: &WorkingModels) -> Result<TmleFit> {
    tmle::targeted_fit(&Nuisance::new(d, wm))
}

/// Runs one estimator.
pub fn estimate(id: EstimatorId, d: &Dataset, wm: &WorkingModels) -> Estimate {
    estimate_many(&[id], d, wm)[0]
}

/// Runs several estimators on one dataset, fitting the propensity and
/// outcome regressions at most once.
pub fn estimate_many(ids: &[EstimatorId], d: &Dataset, wm: &WorkingModels) -> Vec<Estimate> {
    let nu = Nuisance::new(d, wm);
    ids.iter()
        .map(|&id| {
            let r = match id {
                EstimatorId::Unadj => unadj(d),
                EstimatorId::Match => matching::estimate(&nu),
                EstimatorId::Iptw => iptw(&nu),
                EstimatorId::IptwHt => iptw_ht(&nu),
                EstimatorId::Tmle => tmle::estimate(&nu),
                EstimatorId::GlmCm => glm_cm(&nu),
                EstimatorId::GlmPs => glm_ps(&nu),
                EstimatorId::Msm => msm(&nu),
            };
            r.unwrap_or_else(|_| Estimate::failed())
        })
        .collect()
}
