//! Weighted generalized linear models with identity and logit links.
//!
//! Linear models are solved from the weighted normal equations with one step
//! of iterative refinement. Logistic models use iteratively reweighted least
//! squares (Newton-Raphson on the weighted log-likelihood) with step-halving
//! whenever the deviance increases. Logistic outcomes may be fractional in
//! `[0, 1]` (quasi-likelihood).

mod linalg;

pub use linalg::{solve_psd, PIVOT_TOL};

use crate::datamodel::{Dataset, DesignMatrix, Link, ModelSpec, ResolvedDesign, Term};
use crate::error::{Error, Result};

/// Convergence requires every weighted score component below this.
pub const SCORE_TOL: f64 = 1e-8;
/// IRLS stops when no coefficient moves more than this.
pub const STEP_TOL: f64 = 1e-10;
pub const MAX_ITER: usize = 100;
/// Linear predictors beyond this magnitude flag possible separation.
pub const ETA_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, Copy, Default)]
pub enum Weights<'a> {
    #[default]
    Uniform,
    Values(&'a [f64]),
}

impl<'a> Weights<'a> {
    #[inline]
    fn at(&self, i: usize) -> f64 {
        match self {
            Weights::Uniform => 1.0,
            Weights::Values(w) => w[i],
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if let Weights::Values(w) = self {
            if w.len() != n {
                return Err(Error::BadWeights(format!("{} weights for {} rows", w.len(), n)));
            }
            if let Some(i) = w.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::BadWeights(format!("weight {} at row {i}", w[i])));
            }
            if w.iter().all(|v| *v == 0.0) {
                return Err(Error::ZeroWeights);
            }
        }
        Ok(())
    }
}

/// Why a fit did not converge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitDiagnostic {
    /// Linear predictor diverging without shrinking steps.
    Separation { iteration: usize, max_abs_eta: f64 },
    IterationLimit,
    /// Step-halving could not reduce the deviance.
    NoProgress,
}

/// Coefficients from a fit on an explicit design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFit {
    pub coefficients: Vec<f64>,
    pub n_iterations: usize,
    pub converged: bool,
    pub max_abs_score: f64,
    pub diagnostic: Option<FitDiagnostic>,
}

/// A fitted working model.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedGLM {
    pub spec: ModelSpec,
    pub link: Link,
    pub n_iterations: usize,
    pub converged: bool,
    pub max_abs_score: f64,
    pub diagnostic: Option<FitDiagnostic>,
}

impl FittedGLM {
    fn from_matrix_fit(fit: MatrixFit, design: &[Term], link: Link) -> Self {
        let terms = design
            .iter()
            .cloned()
            .zip(fit.coefficients[1..].iter().copied())
            .collect();
        Self {
            spec: ModelSpec::new(fit.coefficients[0], terms, link),
            link,
            n_iterations: fit.n_iterations,
            converged: fit.converged,
            max_abs_score: fit.max_abs_score,
            diagnostic: fit.diagnostic,
        }
    }
}

fn check_dims(x: &DesignMatrix, y: &[f64]) -> Result<()> {
    if x.nrows != y.len() {
        return Err(Error::InvalidArgument(format!(
            "design has {} rows, outcome has {}",
            x.nrows,
            y.len()
        )));
    }
    if x.nrows == 0 || x.ncols == 0 {
        return Err(Error::InvalidArgument("empty design".into()));
    }
    Ok(())
}

/// `X^T diag(v) X` (row-major, full symmetric).
fn gram(x: &DesignMatrix, v: impl Fn(usize) -> f64) -> Vec<f64> {
    let p = x.ncols;
    let mut g = vec![0.0; p * p];
    for i in 0..x.nrows {
        let vi = v(i);
        if vi == 0.0 {
            continue;
        }
        let r = x.row(i);
        for j in 0..p {
            let xv = r[j] * vi;
            let gj = &mut g[j * p..j * p + j + 1];
            for (gk, xk) in gj.iter_mut().zip(r) {
                *gk += xv * xk;
            }
        }
    }
    for j in 0..p {
        for k in (j + 1)..p {
            g[j * p + k] = g[k * p + j];
        }
    }
    g
}

/// `X^T diag(w) r`.
fn weighted_score(x: &DesignMatrix, w: &Weights, r: impl Fn(usize) -> f64) -> Vec<f64> {
    let p = x.ncols;
    let mut s = vec![0.0; p];
    for i in 0..x.nrows {
        let c = w.at(i) * r(i);
        if c == 0.0 {
            continue;
        }
        for (sj, xj) in s.iter_mut().zip(x.row(i)) {
            *sj += xj * c;
        }
    }
    s
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Weighted least squares on an explicit design matrix.
pub fn wls(x: &DesignMatrix, y: &[f64], weights: Weights) -> Result<MatrixFit> {
    check_dims(x, y)?;
    weights.validate(y.len())?;
    let p = x.ncols;
    let g = gram(x, |i| weights.at(i));
    let b = weighted_score(x, &weights, |i| y[i]);
    let mut beta = solve_psd(&g, &b, p)?;
    // one step of iterative refinement
    let resid = |beta: &[f64]| {
        let fitted = x.mul_vec(beta);
        weighted_score(x, &weights, |i| y[i] - fitted[i])
    };
    let s = resid(&beta);
    let delta = solve_psd(&g, &s, p)?;
    for (b, d) in beta.iter_mut().zip(&delta) {
        *b += d;
    }
    let score = max_abs(&resid(&beta));
    Ok(MatrixFit {
        coefficients: beta,
        n_iterations: 1,
        converged: score <= SCORE_TOL,
        max_abs_score: score,
        diagnostic: None,
    })
}

struct LogisticState {
    eta: Vec<f64>,
    mu: Vec<f64>,
    deviance: f64,
}

fn logistic_state(
    x: &DesignMatrix,
    y: &[f64],
    w: &Weights,
    offset: Option<&[f64]>,
    beta: &[f64],
) -> LogisticState {
    let mut eta = x.mul_vec(beta);
    if let Some(o) = offset {
        for (e, oi) in eta.iter_mut().zip(o) {
            *e += oi;
        }
    }
    let mut mu = Vec::with_capacity(eta.len());
    // -2 * weighted log-likelihood, valid for fractional outcomes:
    // log(1 + e^eta) - y * eta per row, sharing one exp with mu
    let mut deviance = 0.0;
    for (i, &e) in eta.iter().enumerate() {
        let z = (-e.abs()).exp();
        let l = z.ln_1p();
        let (m, log1pexp) = if e >= 0.0 { (1.0 / (1.0 + z), e + l) } else { (z / (1.0 + z), l) };
        mu.push(m);
        deviance += w.at(i) * (log1pexp - y[i] * e);
    }
    LogisticState {
        eta,
        mu,
        deviance: 2.0 * deviance,
    }
}

/// Weighted logistic regression by IRLS on an explicit design matrix, with
/// an optional fixed offset added to the linear predictor.
///
/// Separation does not produce an error: the fit comes back with
/// `converged = false` and a [`FitDiagnostic::Separation`].
pub fn logistic_irls(
    x: &DesignMatrix,
    y: &[f64],
    weights: Weights,
    offset: Option<&[f64]>,
) -> Result<MatrixFit> {
    check_dims(x, y)?;
    weights.validate(y.len())?;
    if let Some((row, &value)) = y.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::OutcomeRange { row, value });
    }
    if let Some(o) = offset {
        if o.len() != y.len() || o.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("offset must be finite with one value per row".into()));
        }
    }
    let p = x.ncols;
    let mut beta = vec![0.0; p];
    let mut state = logistic_state(x, y, &weights, offset, &beta);
    let mut prev_step = f64::INFINITY;
    let mut diverging = 0usize;
    let mut score = f64::INFINITY;
    let mut diagnostic = None;
    let mut iterations = 0;

    for iter in 1..=MAX_ITER {
        iterations = iter;
        let mu = &state.mu;
        let s = weighted_score(x, &weights, |i| y[i] - mu[i]);
        score = max_abs(&s);
        if score <= SCORE_TOL {
            break;
        }
        let g = gram(x, |i| weights.at(i) * mu[i] * (1.0 - mu[i]));
        let max_eta = max_abs(&state.eta);
        let delta = match solve_psd(&g, &s, p) {
            Ok(d) => d,
            // information matrix collapsing as fitted probabilities saturate
            Err(Error::RankDeficient { .. }) if max_eta > ETA_LIMIT => {
                diagnostic = Some(FitDiagnostic::Separation {
                    iteration: iter,
                    max_abs_eta: max_eta,
                });
                break;
            }
            Err(e) => return Err(e),
        };

        let mut t = 1.0;
        let mut candidate;
        loop {
            let trial: Vec<f64> = beta.iter().zip(&delta).map(|(b, d)| b + t * d).collect();
            candidate = logistic_state(x, y, &weights, offset, &trial);
            if candidate.deviance <= state.deviance * (1.0 + 1e-12) + 1e-12 {
                beta = trial;
                break;
            }
            t *= 0.5;
            if t < 1e-9 {
                break;
            }
        }
        if t < 1e-9 {
            diagnostic = Some(FitDiagnostic::NoProgress);
            break;
        }
        state = candidate;

        let step = t * max_abs(&delta);
        let max_eta = max_abs(&state.eta);
        if max_eta > ETA_LIMIT && step >= 0.5 * prev_step {
            diverging += 1;
        } else {
            diverging = 0;
        }
        if diverging >= 2 {
            diagnostic = Some(FitDiagnostic::Separation {
                iteration: iter,
                max_abs_eta: max_eta,
            });
            break;
        }
        prev_step = step;

        if step < STEP_TOL {
            score = max_abs(&weighted_score(x, &weights, |i| y[i] - state.mu[i]));
            break;
        }
        if iter == MAX_ITER {
            score = max_abs(&weighted_score(x, &weights, |i| y[i] - state.mu[i]));
        }
    }

    let converged = diagnostic.is_none() && score <= SCORE_TOL;
    if !converged && diagnostic.is_none() {
        let max_eta = max_abs(&state.eta);
        diagnostic = Some(if max_eta > ETA_LIMIT {
            FitDiagnostic::Separation {
                iteration: iterations,
                max_abs_eta: max_eta,
            }
        } else {
            FitDiagnostic::IterationLimit
        });
    }
    Ok(MatrixFit {
        coefficients: beta,
        n_iterations: iterations,
        converged,
        max_abs_score: score,
        diagnostic,
    })
}

/// Weighted linear regression of `d.y` on `design` (intercept implied).
pub fn fit_linear_weighted(d: &Dataset, design: &[Term], weights: Weights) -> Result<FittedGLM> {
    let x = ResolvedDesign::resolve(design, d.w.names())?.matrix(d, None);
    let fit = wls(&x, &d.y, weights)?;
    Ok(FittedGLM::from_matrix_fit(fit, design, Link::Identity))
}

/// Weighted logistic regression of `outcome` (binary or fractional) on
/// `design` evaluated over `d`.
pub fn fit_logistic_weighted(
    d: &Dataset,
    outcome: &[f64],
    design: &[Term],
    weights: Weights,
) -> Result<FittedGLM> {
    let x = ResolvedDesign::resolve(design, d.w.names())?.matrix(d, None);
    let fit = logistic_irls(&x, outcome, weights, None)?;
    Ok(FittedGLM::from_matrix_fit(fit, design, Link::Logit))
}

/// Fitted means over `d`; `treatment_override` sets A for every row first.
pub fn predict(model: &FittedGLM, d: &Dataset, treatment_override: Option<u8>) -> Result<Vec<f64>> {
    model.spec.mean(d, treatment_override)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{expit, Covariates, OutcomeKind};

    fn dataset(x: &[f64], a: &[u8], y: &[f64], kind: OutcomeKind) -> Dataset {
        let w = Covariates::from_columns(vec!["x".into()], &[x.to_vec()]).unwrap();
        Dataset::new(w, a.to_vec(), y.to_vec(), kind).unwrap()
    }

    #[test]
    fn exact_linear_fit() {
        let d = dataset(&[1.0, 2.0, 3.0], &[0, 1, 0], &[1.0, 2.0, 3.0], OutcomeKind::Continuous);
        let f = fit_linear_weighted(&d, &[Term::covariate("x")], Weights::Uniform).unwrap();
        assert!(f.spec.intercept.abs() < 1e-12);
        assert!((f.spec.terms[0].1 - 1.0).abs() < 1e-12);
        assert!(f.converged);
    }

    #[test]
    fn intercept_only_is_weighted_mean() {
        let y = [1.0, 4.0, 2.5, 7.0];
        let w = [0.5, 2.0, 1.0, 0.25];
        let d = dataset(&[0.0; 4], &[0, 1, 0, 1], &y, OutcomeKind::Continuous);
        let f = fit_linear_weighted(&d, &[], Weights::Values(&w)).unwrap();
        let mean = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
        assert!((f.spec.intercept - mean).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_weights() {
        let d = dataset(&[1.0, 2.0, 3.0], &[0, 1, 0], &[1.0, 2.0, 3.0], OutcomeKind::Continuous);
        let x = [Term::covariate("x")];
        assert!(matches!(
            fit_linear_weighted(&d, &x, Weights::Values(&[0.0, 0.0, 0.0])),
            Err(Error::ZeroWeights)
        ));
        assert!(matches!(
            fit_linear_weighted(&d, &x, Weights::Values(&[1.0, -1.0, 1.0])),
            Err(Error::BadWeights(_))
        ));
    }

    #[test]
    fn collinear_design_is_rank_deficient() {
        let d = dataset(&[1.0, 1.0, 1.0], &[0, 1, 0], &[1.0, 2.0, 3.0], OutcomeKind::Continuous);
        let err = fit_linear_weighted(&d, &[Term::covariate("x")], Weights::Uniform).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn intercept_only_logistic_is_logit_of_mean() {
        let y: Vec<f64> = (0..100).map(|i| if i < 30 { 1.0 } else { 0.0 }).collect();
        let d = dataset(&[0.0; 100], &[0; 100], &y, OutcomeKind::Binary);
        let f = fit_logistic_weighted(&d, &y, &[], Weights::Uniform).unwrap();
        assert!(f.converged);
        assert!((f.spec.intercept - (-0.8472979)).abs() < 1e-6);
        assert!(f.max_abs_score <= SCORE_TOL);
    }

    #[test]
    fn perfect_separation_is_flagged() {
        let x = [-2.0, -1.0, 1.0, 2.0];
        let y = [0.0, 0.0, 1.0, 1.0];
        let d = dataset(&x, &[0, 0, 1, 1], &y, OutcomeKind::Binary);
        let f = fit_logistic_weighted(&d, &y, &[Term::covariate("x")], Weights::Uniform).unwrap();
        assert!(!f.converged);
        assert!(
            matches!(f.diagnostic, Some(FitDiagnostic::Separation { .. })),
            "{:?}",
            f.diagnostic
        );
    }

    #[test]
    fn fractional_outcomes_accepted_out_of_range_rejected() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let d = dataset(&x, &[0, 0, 1, 1], &[0.0; 4], OutcomeKind::Continuous);
        let design = [Term::covariate("x")];
        let fy: Vec<f64> = x.iter().map(|v| expit(-1.0 + 0.5 * v)).collect();
        let f = fit_logistic_weighted(&d, &fy, &design, Weights::Uniform).unwrap();
        assert!(f.converged);
        assert!((f.spec.intercept + 1.0).abs() < 1e-8);
        assert!((f.spec.terms[0].1 - 0.5).abs() < 1e-8);
        assert!(matches!(
            fit_logistic_weighted(&d, &[0.0, 1.2, 0.0, 1.0], &design, Weights::Uniform),
            Err(Error::OutcomeRange { row: 1, .. })
        ));
    }

    #[test]
    fn zero_coefficient_logit_predicts_half() {
        let d = dataset(&[1.0, -3.0, 7.0], &[0, 1, 0], &[0.0, 1.0, 0.0], OutcomeKind::Binary);
        let model = FittedGLM {
            spec: ModelSpec::parse(0.0, &[("x", 0.0), ("A", 0.0)], Link::Logit).unwrap(),
            link: Link::Logit,
            n_iterations: 0,
            converged: true,
            max_abs_score: 0.0,
            diagnostic: None,
        };
        assert_eq!(predict(&model, &d, None).unwrap(), vec![0.5; 3]);
    }

    #[test]
    fn identity_prediction_arithmetic() {
        // y = 10 + 2A + W1 at (A = 0, W1 = 3)
        let w = Covariates::from_columns(vec!["W1".into()], &[vec![3.0]]).unwrap();
        let d = Dataset::new(w, vec![0], vec![0.0], OutcomeKind::Continuous).unwrap();
        let model = FittedGLM {
            spec: ModelSpec::parse(10.0, &[("A", 2.0), ("W1", 1.0)], Link::Identity).unwrap(),
            link: Link::Identity,
            n_iterations: 0,
            converged: true,
            max_abs_score: 0.0,
            diagnostic: None,
        };
        assert_eq!(predict(&model, &d, None).unwrap(), vec![13.0]);
        assert_eq!(predict(&model, &d, Some(1)).unwrap(), vec![15.0]);
    }

    #[test]
    fn logistic_with_offset_only_fits_slope() {
        let x = [-1.0, 0.0, 1.0, 2.0, 0.5, -0.5];
        let off = [0.3, -0.2, 0.1, 0.0, 0.4, -0.1];
        let y: Vec<f64> = x.iter().zip(&off).map(|(v, o)| expit(o + 0.7 * v)).collect();
        let m = DesignMatrix::new(6, 1, x.to_vec()).unwrap();
        let f = logistic_irls(&m, &y, Weights::Uniform, Some(&off)).unwrap();
        assert!(f.converged);
        assert!((f.coefficients[0] - 0.7).abs() < 1e-9);
    }
}
