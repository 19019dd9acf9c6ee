use super::{arm_counts, Estimate, Nuisance};
use crate::datamodel::{expit, logit, DesignMatrix, OutcomeKind};
use crate::error::Result;
use crate::glm::{logistic_irls, Weights};

/// Scaled initial predictions for continuous outcomes are kept inside
/// `[bound, 1 - bound]` so the logit offset stays finite.
pub const CONTINUOUS_Q_BOUND: f64 = 0.005;

/// Propensity truncation level `5 / (sqrt(n) ln n)`.
pub fn tmle_bound(n: usize) -> f64 {
    let n = n as f64;
    5.0 / (n.sqrt() * n.ln())
}

/// Targeted fit on the `[0, 1]` outcome scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TmleFit {
    pub epsilon: [f64; 2],
    /// Updated `Q*(1, W_i)` and `Q*(0, W_i)`.
    pub q1: Vec<f64>,
    pub q0: Vec<f64>,
    /// Bounded propensity scores used in the clever covariates.
    pub g: Vec<f64>,
    /// Outcome on the fluctuation scale.
    pub y: Vec<f64>,
    pub converged: bool,
}

impl TmleFit {
    /// `sum_i H_{A_i}(i) (Y_i - Q*(A_i, W_i))` for `H_1 = A/g` and
    /// `H_0 = -(1 - A)/(1 - g)`, evaluated per arm.
    pub fn score(&self, a: &[u8]) -> [f64; 2] {
        let mut s = [0.0; 2];
        for i in 0..a.len() {
            if a[i] == 1 {
                s[0] += (self.y[i] - self.q1[i]) / self.g[i];
            } else {
                s[1] -= (self.y[i] - self.q0[i]) / (1.0 - self.g[i]);
            }
        }
        s
    }
}

/// Logistic fluctuation of initial logit-scale predictions `lq1`, `lq0`
/// along the clever covariates, for an outcome `y` in `[0, 1]`.
pub(crate) fn fluctuate(a: &[u8], y: &[f64], lq1: &[f64], lq0: &[f64], g: &[f64]) -> Result<TmleFit> {
    let n = a.len();
    let mut x = Vec::with_capacity(2 * n);
    let mut offset = Vec::with_capacity(n);
    for i in 0..n {
        if a[i] == 1 {
            x.extend_from_slice(&[1.0 / g[i], 0.0]);
            offset.push(lq1[i]);
        } else {
            x.extend_from_slice(&[0.0, -1.0 / (1.0 - g[i])]);
            offset.push(lq0[i]);
        }
    }
    let x = DesignMatrix::new(n, 2, x)?;
    let fit = logistic_irls(&x, y, Weights::Uniform, Some(&offset))?;
    let [e1, e0] = [fit.coefficients[0], fit.coefficients[1]];
    Ok(TmleFit {
        epsilon: [e1, e0],
        q1: (0..n).map(|i| expit(lq1[i] + e1 / g[i])).collect(),
        q0: (0..n).map(|i| expit(lq0[i] - e0 / (1.0 - g[i]))).collect(),
        g: g.to_vec(),
        y: y.to_vec(),
        converged: fit.converged,
    })
}

/// Inputs of the fluctuation on the `[0, 1]` scale.
struct Targeting {
    y: Vec<f64>,
    lq1: Vec<f64>,
    lq0: Vec<f64>,
    g: Vec<f64>,
    lo: f64,
    hi: f64,
    initial_converged: bool,
}

enum Prepared {
    Constant(f64),
    Fit(Targeting),
}

fn prepare(nu: &Nuisance) -> Result<Prepared> {
    let d = nu.d;
    arm_counts(d)?;
    let lo = d.y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = d.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(Prepared::Constant(lo));
    }
    let q = nu.outcome()?;
    let ps = nu.ps()?;
    let b = tmle_bound(d.n());
    let g = ps.g.iter().map(|&v| v.clamp(b, 1.0 - b)).collect();
    let (y, lq1, lq0) = match d.outcome_kind {
        OutcomeKind::Binary => (d.y.clone(), q.eta1.clone(), q.eta0.clone()),
        OutcomeKind::Continuous => {
            let range = hi - lo;
            let scale = |v: f64| logit(((v - lo) / range).clamp(CONTINUOUS_Q_BOUND, 1.0 - CONTINUOUS_Q_BOUND));
            (
                d.y.iter().map(|v| (v - lo) / range).collect(),
                q.eta1.iter().map(|&v| scale(v)).collect(),
                q.eta0.iter().map(|&v| scale(v)).collect(),
            )
        }
    };
    Ok(Prepared::Fit(Targeting {
        y,
        lq1,
        lq0,
        g,
        lo,
        hi,
        initial_converged: q.converged && ps.converged,
    }))
}

/// The targeted fit behind [`super::estimate_tmle`], on the fluctuation
/// scale. Fails for constant outcomes, where no fluctuation is run.
pub(super) fn targeted_fit(nu: &Nuisance) -> Result<TmleFit> {
    match prepare(nu)? {
        Prepared::Constant(_) => Err(crate::error::Error::InvalidArgument("constant outcome".into())),
        Prepared::Fit(t) => fluctuate(&nu.d.a, &t.y, &t.lq1, &t.lq0, &t.g),
    }
}

pub(super) fn estimate(nu: &Nuisance) -> Result<Estimate> {
    let d = nu.d;
    let kind = d.outcome_kind;
    let t = match prepare(nu)? {
        Prepared::Constant(c) => return Ok(Estimate::from_means(c, c, kind)),
        Prepared::Fit(t) => t,
    };
    let unscale = |m: f64| match kind {
        OutcomeKind::Binary => m,
        OutcomeKind::Continuous => t.lo + (t.hi - t.lo) * m,
    };
    let n = d.n() as f64;
    let fit = match fluctuate(&d.a, &t.y, &t.lq1, &t.lq0, &t.g) {
        Ok(f) if f.converged => f,
        // fall back to the initial plug-in, flagged
        _ => {
            let m1 = t.lq1.iter().map(|&v| expit(v)).sum::<f64>() / n;
            let m0 = t.lq0.iter().map(|&v| expit(v)).sum::<f64>() / n;
            return Ok(Estimate::from_means(unscale(m1), unscale(m0), kind).flagged(false));
        }
    };
    let m1 = fit.q1.iter().sum::<f64>() / n;
    let m0 = fit.q0.iter().sum::<f64>() / n;
    Ok(Estimate::from_means(unscale(m1), unscale(m0), kind).flagged(t.initial_converged))
}
