//! Exact Sample Treatment bias of the inverse-probability-weighted target.
//!
//! Conditional on a source sample, resampling `(W, A)` pairs makes the
//! IPTW estimator of `E[Y(1)]` target `n^-1 sum A_i Q(1, W_i) / g_n(W_i)`
//! rather than the plasmode truth `psi_n = n^-1 sum Q(1, W_i)`. The gap
//! `B_n = n^-1 sum (A_i - g_n(W_i)) Q(1, W_i) / g_n(W_i)` is of order
//! `n^-1/2` and does not vanish faster. Under Generate Treatment the
//! corresponding target is exactly `psi_n`.

use crate::datamodel::{Dataset, ModelSpec, SourceDataset, Term};
use crate::error::{Error, Result};
use crate::glm::{fit_logistic_weighted, predict, FittedGLM, Weights};

/// Which counterfactual mean the report refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Treated,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasReport {
    /// Plasmode truth.
    pub psi_n: f64,
    /// Target of the IPTW estimator under Sample Treatment.
    pub iptw_target: f64,
    /// Bias term from its closed form.
    pub b_n: f64,
    /// `sqrt(n) * b_n`.
    pub scaled: f64,
    /// `b_n - (iptw_target - psi_n)`; zero up to rounding.
    pub identity_residual: f64,
}

impl BiasReport {
    /// Predicted Sample Treatment mean of the estimator.
    pub fn predicted_mean(&self) -> f64 {
        self.psi_n + self.b_n
    }
}

/// Reports for both arms and their difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReport {
    pub treated: BiasReport,
    pub control: BiasReport,
    pub ate: BiasReport,
}

/// Compensated (Neumaier) summation.
fn sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
        s = t;
    }
    s + c
}

/// Bias report from per-row treatment, propensity and counterfactual mean
/// `q_i = Q(arm, W_i)`. The control arm swaps `A <-> 1 - A` and `g <-> 1 - g`.
pub fn bias_from_parts(a: &[u8], g: &[f64], q: &[f64], arm: Arm) -> Result<BiasReport> {
    let n = a.len();
    if n == 0 || g.len() != n || q.len() != n {
        return Err(Error::InvalidArgument("oracle inputs must be nonempty and of equal length".into()));
    }
    let take = |i: usize| match arm {
        Arm::Treated => (f64::from(a[i]), g[i]),
        Arm::Control => (1.0 - f64::from(a[i]), 1.0 - g[i]),
    };
    for i in 0..n {
        let (ai, gi) = take(i);
        if ai == 1.0 && !(gi > 0.0) {
            return Err(Error::DegeneratePropensity { row: i });
        }
    }
    let nf = n as f64;
    let psi_n = sum(q.iter().copied()) / nf;
    let iptw_target = sum((0..n).map(|i| {
        let (ai, gi) = take(i);
        if ai == 1.0 {
            q[i] / gi
        } else {
            0.0
        }
    })) / nf;
    let b_n = sum((0..n).map(|i| {
        let (ai, gi) = take(i);
        if gi > 0.0 {
            (ai - gi) * q[i] / gi
        } else {
            // a zero score on an untreated row contributes -q
            -q[i]
        }
    })) / nf;
    let identity_residual = b_n - (iptw_target - psi_n);
    debug_assert!(identity_residual.abs() <= 1e-10 * psi_n.abs().max(iptw_target.abs()).max(1.0));
    Ok(BiasReport {
        psi_n,
        iptw_target,
        b_n,
        scaled: nf.sqrt() * b_n,
        identity_residual,
    })
}

fn parts(source: &SourceDataset, gbar_n: &FittedGLM, q_model: &ModelSpec, arm: Arm) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = &source.data;
    let g = predict(gbar_n, d, None)?;
    let a = match arm {
        Arm::Treated => 1,
        Arm::Control => 0,
    };
    Ok((g, q_model.mean(d, Some(a))?))
}

/// `n^-1 sum A_i Q(1, W_i) / g_n(W_i)`.
pub fn iptw_sample_treatment_target(source: &SourceDataset, gbar_n: &FittedGLM, qbar: &ModelSpec) -> Result<f64> {
    Ok(bias_bn(source, gbar_n, qbar)?.iptw_target)
}

/// Treated-arm bias report.
pub fn bias_bn(source: &SourceDataset, gbar_n: &FittedGLM, qbar: &ModelSpec) -> Result<BiasReport> {
    bias_for_arm(source, gbar_n, qbar, Arm::Treated)
}

pub fn bias_for_arm(source: &SourceDataset, gbar_n: &FittedGLM, qbar: &ModelSpec, arm: Arm) -> Result<BiasReport> {
    let (g, q) = parts(source, gbar_n, qbar, arm)?;
    bias_from_parts(&source.data.a, &g, &q, arm)
}

/// `n^-1 sum g(W_i) Q(1, W_i) / g(W_i)`, which equals `psi_n` for any
/// strictly positive `g`.
pub fn generate_treatment_identity_from(g: &[f64], q: &[f64]) -> f64 {
    let n = q.len() as f64;
    let v = sum(g.iter().zip(q).map(|(gi, qi)| gi * qi / gi)) / n;
    let psi = sum(q.iter().copied()) / n;
    assert!(
        (v - psi).abs() <= 1e-12 * psi.abs().max(1.0),
        "generate-treatment identity violated: {v} vs {psi}"
    );
    v
}

/// Generate Treatment analogue of the IPTW target; always `psi_n`.
pub fn generate_treatment_target_identity(source: &SourceDataset, gbar_n: &FittedGLM, qbar: &ModelSpec) -> Result<f64> {
    let (g, q) = parts(source, gbar_n, qbar, Arm::Treated)?;
    if let Some(row) = g.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::DegeneratePropensity { row });
    }
    Ok(generate_treatment_identity_from(&g, &q))
}

/// Reports for both arms and the ATE (treated minus control, term by term).
pub fn oracle_report(source: &SourceDataset, gbar_n: &FittedGLM, qbar: &ModelSpec) -> Result<OracleReport> {
    let treated = bias_for_arm(source, gbar_n, qbar, Arm::Treated)?;
    let control = bias_for_arm(source, gbar_n, qbar, Arm::Control)?;
    Ok(OracleReport {
        treated,
        control,
        ate: difference(&treated, &control, source.data.n()),
    })
}

fn difference(t: &BiasReport, c: &BiasReport, n: usize) -> BiasReport {
    let b_n = t.b_n - c.b_n;
    let psi_n = t.psi_n - c.psi_n;
    let iptw_target = t.iptw_target - c.iptw_target;
    BiasReport {
        psi_n,
        iptw_target,
        b_n,
        scaled: (n as f64).sqrt() * b_n,
        identity_residual: b_n - (iptw_target - psi_n),
    }
}

/// Maximum-likelihood propensity fit on the source, the `g_n` of the oracle.
pub fn fit_source_propensity(data: &Dataset, ps_design: &[Term]) -> Result<FittedGLM> {
    fit_logistic_weighted(data, &data.treatment_f64(), ps_design, Weights::Uniform)
}

/// Oracle report for a source using its maximum-likelihood propensity fit.
pub fn oracle_for_source(source: &SourceDataset, ps_design: &[Term], qbar: &ModelSpec) -> Result<OracleReport> {
    let g = fit_source_propensity(&source.data, ps_design)?;
    oracle_report(source, &g, qbar)
}
