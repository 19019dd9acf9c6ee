//! Plasmode simulation engine.
//!
//! Generates source datasets from known data-generating mechanisms, draws
//! plasmode replicates under the Sample Treatment and Generate Treatment
//! frameworks, runs causal-effect estimators on each replicate, and
//! summarises their bias, standard error, RMSE and coverage. The [`oracle`]
//! module computes the exact bias the Sample Treatment framework induces in
//! inverse-probability-weighted estimators.

pub mod datamodel;
pub mod dgm;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod harness;
pub mod oracle;
pub mod plasmode;
pub mod rng;

pub use datamodel::{
    Covariates, Dataset, EstimateRecord, Estimand, EstimatorId, Framework, Link, ModelSpec, OutcomeKind,
    SourceDataset, Term, TruthSet,
};
pub use dgm::{builtin, generate_source, ScenarioSpec};
pub use error::{Error, Result};
pub use harness::{multi_source_study, run_monte_carlo, summarize, MetricsSummary, StudyConfig};
pub use oracle::BiasReport;
