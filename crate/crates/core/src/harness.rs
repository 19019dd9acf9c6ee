//! Deterministic parallel Monte Carlo driver and performance metrics.

use rayon::prelude::*;

use crate::datamodel::{EstimateRecord, Estimand, EstimatorId, Framework, SourceDataset, TruthSet};
use crate::dgm::{generate_source, ScenarioSpec};
use crate::error::{Error, Result};
use crate::estimators::{estimate_many, Estimate};
use crate::oracle::{oracle_for_source, OracleReport};
use crate::plasmode::{GenerationModels, ModelSource, PlasmodeConfig};
use crate::rng::{Purpose, RngStream};

/// Wald multiplier for coverage.
pub const Z_95: f64 = 1.96;

/// Settings shared by every source in a study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub n: usize,
    pub replicates: usize,
    pub frameworks: Vec<Framework>,
    pub estimators: Vec<EstimatorId>,
    pub master_seed: u64,
    /// Worker threads; 0 uses rayon's default.
    pub workers: usize,
    pub ps_for_generation: ModelSource,
    pub outcome_for_generation: ModelSource,
    pub replicate_size: Option<usize>,
}

impl StudyConfig {
    pub fn new(n: usize, replicates: usize, master_seed: u64) -> Self {
        Self {
            n,
            replicates,
            frameworks: Framework::ALL.to_vec(),
            estimators: EstimatorId::ALL.to_vec(),
            master_seed,
            workers: 0,
            ps_for_generation: ModelSource::TrueModel,
            outcome_for_generation: ModelSource::TrueModel,
            replicate_size: None,
        }
    }

    pub fn plasmode_config(&self, framework: Framework) -> PlasmodeConfig {
        PlasmodeConfig {
            framework,
            ps_for_generation: self.ps_for_generation,
            outcome_for_generation: self.outcome_for_generation,
            replicate_size: self.replicate_size,
        }
    }

    /// Thread pool with `workers` threads.
    pub fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
    }
}

/// Output of one Monte Carlo run over a single source.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloRun {
    pub source: SourceDataset,
    /// Truths of the outcome model used for generation.
    pub truths: TruthSet,
    /// Canonical order: framework, replicate, estimator.
    pub records: Vec<EstimateRecord>,
}

/// Generates one source from `(spec, n)` keyed by `master_seed`, then runs
/// every requested estimator on `replicates` plasmode draws per framework.
pub fn run_monte_carlo(spec: &ScenarioSpec, cfg: &StudyConfig) -> Result<MonteCarloRun> {
    let source = generate_source(spec, cfg.n, cfg.master_seed)?;
    let pool = cfg.pool()?;
    pool.install(|| run_on_source(spec, &source, cfg))
}

/// Runs the replicate loop against an existing source.
pub fn run_on_source(spec: &ScenarioSpec, source: &SourceDataset, cfg: &StudyConfig) -> Result<MonteCarloRun> {
    if cfg.replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be at least 1".into()));
    }
    let wm = spec.working_models();
    let mut records = Vec::with_capacity(cfg.frameworks.len() * cfg.replicates * cfg.estimators.len());
    let mut truths = None;
    for &framework in &cfg.frameworks {
        let gm = GenerationModels::prepare(spec, source, &cfg.plasmode_config(framework))?;
        truths.get_or_insert(gm.truths);
        let block: Vec<Vec<EstimateRecord>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let mut rng = RngStream::new(cfg.master_seed, Purpose::Replicate(framework), r as u64).rng();
                let estimates = match gm.draw(source, framework, cfg.replicate_size, &mut rng) {
                    Ok(rep) => estimate_many(&cfg.estimators, &rep.data, &wm),
                    Err(_) => vec![Estimate::failed(); cfg.estimators.len()],
                };
                estimates
                    .into_iter()
                    .zip(&cfg.estimators)
                    .map(|(e, &id)| e.into_record(r, id, framework))
                    .collect()
            })
            .collect();
        records.extend(block.into_iter().flatten());
    }
    Ok(MonteCarloRun {
        source: source.clone(),
        truths: truths.unwrap_or(source.truths),
        records,
    })
}

/// Performance of one estimator under one framework for one estimand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSummary {
    pub estimator: EstimatorId,
    pub framework: Framework,
    pub estimand: Estimand,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    /// Absent when the truth is zero.
    pub pct_bias: Option<f64>,
    pub se: f64,
    pub rmse: f64,
    pub bias_se: f64,
    /// Percent of replicates with `|estimate - truth| <= 1.96 se`.
    pub coverage: f64,
    pub n_replicates: usize,
    pub n_converged: usize,
}

/// Metrics over a set of estimates of a quantity whose truth is `truth`.
/// Fewer than two values give NaN metrics.
pub fn metrics(values: &[f64], truth: f64) -> (f64, f64, f64, f64, f64) {
    let r = values.len();
    if r < 2 {
        return (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    }
    let rf = r as f64;
    let mean = values.iter().sum::<f64>() / rf;
    let bias = mean - truth;
    let se = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (rf - 1.0)).sqrt();
    let rmse = (values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / rf).sqrt();
    let bias_se = if se > 0.0 {
        bias.abs() / se
    } else if bias == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let half = Z_95 * se;
    let covered = values.iter().filter(|v| (*v - truth).abs() <= half).count();
    (mean, se, rmse, bias_se, 100.0 * covered as f64 / rf)
}

/// Summaries per (framework, estimator) cell, in canonical order.
/// Non-converged records and non-finite values are excluded.
pub fn summarize(records: &[EstimateRecord], truths: &TruthSet, estimand: Estimand) -> Result<Vec<MetricsSummary>> {
    let truth = truths
        .value(estimand)
        .ok_or_else(|| Error::InvalidArgument(format!("no truth for estimand {estimand}")))?;
    let mut cells: Vec<(Framework, EstimatorId)> = records.iter().map(|r| (r.framework, r.estimator)).collect();
    cells.sort();
    cells.dedup();
    Ok(cells
        .into_iter()
        .map(|(framework, estimator)| {
            let cell: Vec<&EstimateRecord> = records
                .iter()
                .filter(|r| r.framework == framework && r.estimator == estimator)
                .collect();
            let values: Vec<f64> = cell
                .iter()
                .filter(|r| r.converged)
                .filter_map(|r| r.value(estimand))
                .collect();
            let (mean, se, rmse, bias_se, coverage) = metrics(&values, truth);
            let bias = mean - truth;
            MetricsSummary {
                estimator,
                framework,
                estimand,
                truth,
                mean,
                bias,
                pct_bias: (truth != 0.0).then(|| 100.0 * bias / truth),
                se,
                rmse,
                bias_se,
                coverage,
                n_replicates: cell.len(),
                n_converged: values.len(),
            }
        })
        .collect())
}

/// One source of a multi-source study.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSummary {
    pub index: usize,
    pub seed: u64,
    pub truths: TruthSet,
    pub summaries: Vec<MetricsSummary>,
    /// Sample Treatment bias of the IPTW target at the source-level fit.
    pub oracle: Option<OracleReport>,
}

/// Cross-source distribution of bias:SE for one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossSourceAggregate {
    pub framework: Framework,
    pub estimator: EstimatorId,
    pub estimand: Estimand,
    pub median_bias_se: f64,
    pub q25_bias_se: f64,
    pub q75_bias_se: f64,
    pub min_bias_se: f64,
    pub max_bias_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiSourceStudy {
    pub sources: Vec<SourceSummary>,
    pub aggregates: Vec<CrossSourceAggregate>,
}

impl MultiSourceStudy {
    pub fn aggregate(&self, framework: Framework, estimator: EstimatorId, estimand: Estimand) -> Option<&CrossSourceAggregate> {
        self.aggregates
            .iter()
            .find(|a| a.framework == framework && a.estimator == estimator && a.estimand == estimand)
    }

    /// Per-source summaries for one cell.
    pub fn cell(&self, framework: Framework, estimator: EstimatorId, estimand: Estimand) -> Vec<MetricsSummary> {
        self.sources
            .iter()
            .filter_map(|s| {
                s.summaries
                    .iter()
                    .find(|m| m.framework == framework && m.estimator == estimator && m.estimand == estimand)
                    .copied()
            })
            .collect()
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Seed of the `k`-th source of a multi-source study.
pub fn source_seed(master_seed: u64, k: usize) -> u64 {
    RngStream::new(master_seed, Purpose::SourceSeed, k as u64).derive_seed()
}

/// Runs source `k` of a multi-source study: draws its source from
/// [`source_seed`], runs every replicate and summarizes `estimands`.
/// Returns the full run alongside the summary.
pub fn study_source(
    spec: &ScenarioSpec,
    cfg: &StudyConfig,
    k: usize,
    estimands: &[Estimand],
) -> Result<(MonteCarloRun, SourceSummary)> {
    let seed = source_seed(cfg.master_seed, k);
    let source = generate_source(spec, cfg.n, seed)?;
    let source_cfg = StudyConfig {
        master_seed: seed,
        ..cfg.clone()
    };
    let run = cfg.pool()?.install(|| run_on_source(spec, &source, &source_cfg))?;
    let summary = summarize_source(spec, cfg, k, &run, estimands)?;
    Ok((run, summary))
}

/// Summaries of one run over its own source, plus the source's oracle
/// report. Estimands without a truth are skipped.
pub fn summarize_source(
    spec: &ScenarioSpec,
    cfg: &StudyConfig,
    index: usize,
    run: &MonteCarloRun,
    estimands: &[Estimand],
) -> Result<SourceSummary> {
    let mut summaries = Vec::new();
    for &e in estimands {
        if run.truths.value(e).is_some() {
            summaries.extend(summarize(&run.records, &run.truths, e)?);
        }
    }
    let gm = GenerationModels::prepare(spec, &run.source, &cfg.plasmode_config(Framework::SampleTreatment))?;
    let oracle = oracle_for_source(&run.source, &spec.working_models().ps_design, &gm.outcome).ok();
    Ok(SourceSummary {
        index,
        seed: run.source.seed,
        truths: run.truths,
        summaries,
        oracle,
    })
}

/// Cross-source bias:SE distribution per cell of the first source.
pub fn aggregate_sources(sources: &[SourceSummary]) -> Vec<CrossSourceAggregate> {
    let Some(first) = sources.first() else {
        return Vec::new();
    };
    first
        .summaries
        .iter()
        .map(|m| {
            let mut v: Vec<f64> = sources
                .iter()
                .filter_map(|s| {
                    s.summaries
                        .iter()
                        .find(|x| x.framework == m.framework && x.estimator == m.estimator && x.estimand == m.estimand)
                        .map(|x| x.bias_se)
                })
                .filter(|x| !x.is_nan())
                .collect();
            v.sort_by(f64::total_cmp);
            CrossSourceAggregate {
                framework: m.framework,
                estimator: m.estimator,
                estimand: m.estimand,
                median_bias_se: quantile(&v, 0.5),
                q25_bias_se: quantile(&v, 0.25),
                q75_bias_se: quantile(&v, 0.75),
                min_bias_se: v.first().copied().unwrap_or(f64::NAN),
                max_bias_se: v.last().copied().unwrap_or(f64::NAN),
            }
        })
        .collect()
}

/// Repeats [`run_monte_carlo`] over `n_sources` independently seeded
/// sources and aggregates bias:SE across them.
pub fn multi_source_study(
    spec: &ScenarioSpec,
    cfg: &StudyConfig,
    n_sources: usize,
    estimands: &[Estimand],
) -> Result<MultiSourceStudy> {
    if n_sources < 2 {
        return Err(Error::InvalidArgument("a multi-source study needs at least 2 sources".into()));
    }
    let sources = (0..n_sources)
        .map(|k| study_source(spec, cfg, k, estimands).map(|(_, s)| s))
        .collect::<Result<Vec<_>>>()?;
    let aggregates = aggregate_sources(&sources);
    Ok(MultiSourceStudy { sources, aggregates })
}
