//! Run configuration: a TOML document naming a scenario (built-in id or
//! inline table) and the study settings. See `docs/config.md` for the
//! grammar.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use plasmode_core::datamodel::{load_covariates_csv, load_dataset_csv, Link, ModelSpec, OutcomeKind, Term};
use plasmode_core::dgm::{source_truths, CovariateGenerator, CovariateLaw, TreatmentModel};
use plasmode_core::plasmode::ModelSource;
use plasmode_core::{builtin, Estimand, EstimatorId, Framework, ScenarioSpec, SourceDataset, StudyConfig};
use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Where `run` writes when neither the config nor `--output-dir` says.
pub const DEFAULT_OUTPUT_DIR: &str = "plasmode-out";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },

    #[error("'{0}' is neither a config file nor a built-in config name")]
    NotFound(String),
}

fn field(name: impl Into<String>, message: impl fmt::Display) -> ConfigError {
    ConfigError::Field {
        field: name.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub replicates: usize,
    pub master_seed: u64,
    #[serde(default = "default_frameworks")]
    pub frameworks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimands: Option<Vec<String>>,
    #[serde(default = "one")]
    pub n_sources: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ps_for_generation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_for_generation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicate_size: Option<usize>,
    /// A fixed source dataset (covariates, `A`, `Y`) used instead of a
    /// generated one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_file: Option<PathBuf>,
    pub scenario: ScenarioRef,
}

fn default_frameworks() -> Vec<String> {
    Framework::ALL.iter().map(|f| f.as_str().to_string()).collect()
}

fn one() -> usize {
    1
}

/// A built-in scenario id or an inline definition.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioRef {
    Builtin(String),
    Inline(Box<ScenarioConfig>),
}

impl Serialize for ScenarioRef {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ScenarioRef::Builtin(id) => s.serialize_str(id),
            ScenarioRef::Inline(c) => c.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ScenarioRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = ScenarioRef;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a built-in scenario id or a scenario table")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<ScenarioRef, E> {
                Ok(ScenarioRef::Builtin(v.to_string()))
            }
            fn visit_map<M: MapAccess<'de>>(self, m: M) -> Result<ScenarioRef, M::Error> {
                let c = ScenarioConfig::deserialize(de::value::MapAccessDeserializer::new(m))?;
                Ok(ScenarioRef::Inline(Box::new(c)))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "custom_id")]
    pub id: String,
    /// Covariate rows to bootstrap from, instead of generators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msm_design: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub covariates: Vec<CovariateConfig>,
    pub treatment: TreatmentConfig,
    pub outcome: OutcomeConfig,
}

fn custom_id() -> String {
    "custom".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateConfig {
    Normal { name: String, mean: f64, sd: f64 },
    Bernoulli { name: String, p: f64 },
    SumWithNoise { name: String, base: String, sd: f64 },
    Threshold { name: String, base: String, cutoff: f64, above: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreatmentConfig {
    Logit {
        intercept: f64,
        #[serde(default)]
        terms: Vec<TermCoef>,
    },
    Randomized {
        p: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeConfig {
    pub link: String,
    pub intercept: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<f64>,
    #[serde(default)]
    pub terms: Vec<TermCoef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermCoef {
    pub term: String,
    pub coef: f64,
}

/// A validated config, ready to run.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub spec: ScenarioSpec,
    pub study: StudyConfig,
    pub estimands: Vec<Estimand>,
    pub n_sources: usize,
    pub output_dir: PathBuf,
    /// Set when the config names a `source_file`.
    pub source: Option<SourceDataset>,
}

fn parse_list<T: std::str::FromStr>(name: &str, items: &[String]) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    if items.is_empty() {
        return Err(field(name, "must not be empty"));
    }
    let mut out = Vec::with_capacity(items.len());
    for (i, s) in items.iter().enumerate() {
        out.push(s.parse::<T>().map_err(|e| field(format!("{name}[{i}]"), e))?);
    }
    Ok(out)
}

fn model_spec(path: &str, link: Link, intercept: f64, terms: &[TermCoef]) -> Result<ModelSpec, ConfigError> {
    let mut parsed = Vec::with_capacity(terms.len());
    for (i, t) in terms.iter().enumerate() {
        let term: Term = t.term.parse().map_err(|e| field(format!("{path}.terms[{i}].term"), e))?;
        parsed.push((term, t.coef));
    }
    Ok(ModelSpec::new(intercept, parsed, link))
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn term_coefs(m: &ModelSpec) -> Vec<TermCoef> {
    m.terms
        .iter()
        .map(|(t, c)| TermCoef {
            term: t.to_string(),
            coef: *c,
        })
        .collect()
}

impl ScenarioConfig {
    /// Inline form of a scenario. `None` for bootstrapped covariates,
    /// which live in a file rather than the config.
    pub fn from_spec(spec: &ScenarioSpec) -> Option<Self> {
        let CovariateLaw::Generated(gens) = &spec.covariates else {
            return None;
        };
        let covariates = gens
            .iter()
            .map(|g| match g.clone() {
                CovariateGenerator::Normal { name, mean, sd } => CovariateConfig::Normal { name, mean, sd },
                CovariateGenerator::Bernoulli { name, p } => CovariateConfig::Bernoulli { name, p },
                CovariateGenerator::SumWithNoise { name, base, sd } => CovariateConfig::SumWithNoise { name, base, sd },
                CovariateGenerator::Threshold {
                    name,
                    base,
                    cutoff,
                    above,
                } => CovariateConfig::Threshold {
                    name,
                    base,
                    cutoff,
                    above,
                },
            })
            .collect();
        let treatment = match &spec.treatment {
            TreatmentModel::Logit(m) => TreatmentConfig::Logit {
                intercept: m.intercept,
                terms: term_coefs(m),
            },
            TreatmentModel::Randomized { p } => TreatmentConfig::Randomized { p: *p },
        };
        Some(ScenarioConfig {
            id: spec.id.clone(),
            covariate_file: None,
            msm_design: spec.msm_design.as_ref().map(|d| d.iter().map(Term::to_string).collect()),
            covariates,
            treatment,
            outcome: OutcomeConfig {
                link: spec.outcome.link.as_str().to_string(),
                intercept: spec.outcome.intercept,
                noise_sd: spec.outcome.noise_sd,
                terms: term_coefs(&spec.outcome),
            },
        })
    }

    /// `source_covariates` stands in for the covariate law when the
    /// scenario declares neither generators nor a covariate file.
    fn to_spec(&self, base: &Path, source_covariates: Option<&plasmode_core::Covariates>) -> Result<ScenarioSpec, ConfigError> {
        let covariates = match (&self.covariate_file, self.covariates.is_empty()) {
            (Some(_), false) => {
                return Err(field("scenario.covariates", "give either covariates or covariate_file, not both"))
            }
            (Some(f), true) => {
                let w = load_covariates_csv(&resolve_path(base, f), None).map_err(|e| field("scenario.covariate_file", e))?;
                CovariateLaw::Bootstrap(Arc::new(w))
            }
            (None, false) => CovariateLaw::Generated(self.covariates.iter().map(CovariateConfig::to_generator).collect()),
            (None, true) => match source_covariates {
                Some(w) => CovariateLaw::Bootstrap(Arc::new(w.clone())),
                None => return Err(field("scenario.covariates", "needs covariate generators or a covariate_file")),
            },
        };
        let treatment = match &self.treatment {
            TreatmentConfig::Logit { intercept, terms } => {
                TreatmentModel::Logit(model_spec("scenario.treatment", Link::Logit, *intercept, terms)?)
            }
            TreatmentConfig::Randomized { p } => TreatmentModel::Randomized { p: *p },
        };
        let link = match self.outcome.link.as_str() {
            "identity" => Link::Identity,
            "logit" => Link::Logit,
            other => return Err(field("scenario.outcome.link", format!("unknown link '{other}' (identity or logit)"))),
        };
        let mut outcome = model_spec("scenario.outcome", link, self.outcome.intercept, &self.outcome.terms)?;
        match (link, self.outcome.noise_sd) {
            (Link::Identity, Some(sd)) => outcome = outcome.with_noise_sd(sd),
            (Link::Identity, None) => return Err(field("scenario.outcome.noise_sd", "required for the identity link")),
            (Link::Logit, Some(_)) => return Err(field("scenario.outcome.noise_sd", "only valid for the identity link")),
            (Link::Logit, None) => {}
        }
        let msm_design = match &self.msm_design {
            None => None,
            Some(ts) => Some(
                ts.iter()
                    .enumerate()
                    .map(|(i, t)| t.parse::<Term>().map_err(|e| field(format!("scenario.msm_design[{i}]"), e)))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        let spec = ScenarioSpec {
            id: self.id.clone(),
            covariates,
            treatment,
            outcome,
            msm_design,
        };
        spec.validate().map_err(|e| field("scenario", e))?;
        Ok(spec)
    }
}

impl CovariateConfig {
    fn to_generator(&self) -> CovariateGenerator {
        match self.clone() {
            CovariateConfig::Normal { name, mean, sd } => CovariateGenerator::Normal { name, mean, sd },
            CovariateConfig::Bernoulli { name, p } => CovariateGenerator::Bernoulli { name, p },
            CovariateConfig::SumWithNoise { name, base, sd } => CovariateGenerator::SumWithNoise { name, base, sd },
            CovariateConfig::Threshold {
                name,
                base,
                cutoff,
                above,
            } => CovariateGenerator::Threshold {
                name,
                base,
                cutoff,
                above,
            },
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Canonical TOML text; parsing it gives back `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads a config file, or falls back to a built-in config of that name.
    pub fn load(arg: &str) -> Result<(Self, PathBuf), ConfigError> {
        let path = Path::new(arg);
        if path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                path: path.to_path_buf(),
                source,
            })?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            return Ok((Self::parse(&text)?, base));
        }
        match builtin_config(arg) {
            Some(c) => Ok((c, PathBuf::new())),
            None => Err(ConfigError::NotFound(arg.to_string())),
        }
    }

    /// Validates every field and builds the scenario and study settings.
    /// Relative file paths resolve against `base`.
    pub fn resolve(&self, base: &Path) -> Result<ResolvedRun, ConfigError> {
        if self.n == 0 {
            return Err(field("n", "must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(field("replicates", "must be at least 1"));
        }
        if self.n_sources == 0 {
            return Err(field("n_sources", "must be at least 1"));
        }
        if self.replicate_size == Some(0) {
            return Err(field("replicate_size", "must be at least 1"));
        }
        if self.master_seed > i64::MAX as u64 {
            return Err(field("master_seed", "must fit in a TOML integer (below 2^63)"));
        }

        let source_data = match &self.source_file {
            None => None,
            Some(f) => {
                if self.n_sources > 1 {
                    return Err(field("n_sources", "a fixed source_file allows only one source"));
                }
                let kind = match &self.scenario {
                    ScenarioRef::Inline(c) if c.outcome.link == "identity" => OutcomeKind::Continuous,
                    ScenarioRef::Inline(_) => OutcomeKind::Binary,
                    ScenarioRef::Builtin(id) => builtin(id).map_err(|e| field("scenario", e))?.outcome_kind(),
                };
                let d = load_dataset_csv(&resolve_path(base, f), kind).map_err(|e| field("source_file", e))?;
                if d.n() != self.n {
                    return Err(field("n", format!("source_file has {} rows but n = {}", d.n(), self.n)));
                }
                Some(d)
            }
        };

        let spec = match &self.scenario {
            ScenarioRef::Builtin(id) => builtin(id).map_err(|e| field("scenario", e))?,
            ScenarioRef::Inline(c) => c.to_spec(base, source_data.as_ref().map(|d| &d.w))?,
        };
        let binary = spec.outcome_kind() == OutcomeKind::Binary;
        let has_msm = spec.msm_design.is_some();

        let frameworks: Vec<Framework> = parse_list("frameworks", &self.frameworks)?;
        let estimators: Vec<EstimatorId> = match &self.estimators {
            Some(v) => parse_list("estimators", v)?,
            None => EstimatorId::ALL
                .iter()
                .copied()
                .filter(|&e| e != EstimatorId::Msm || (has_msm && binary))
                .collect(),
        };
        if estimators.contains(&EstimatorId::Msm) {
            if !has_msm {
                return Err(field("estimators", format!("msm needs a scenario with an MSM design ({} has none)", spec.id)));
            }
            if !binary {
                return Err(field("estimators", "msm needs a binary outcome"));
            }
        }
        let estimands: Vec<Estimand> = match &self.estimands {
            Some(v) => parse_list("estimands", v)?,
            None => {
                let mut e = vec![Estimand::Ate];
                if binary {
                    e.push(Estimand::Rr);
                }
                if estimators.contains(&EstimatorId::Msm) {
                    e.push(Estimand::Logcor);
                }
                e
            }
        };
        for e in &estimands {
            match e {
                Estimand::Rr | Estimand::Logcor if !binary => {
                    return Err(field(
                        "estimands",
                        format!("{e} requires a binary outcome; scenario {} has a continuous outcome", spec.id),
                    ))
                }
                Estimand::Logcor if !has_msm => {
                    return Err(field("estimands", format!("logcor needs a scenario with an MSM design ({} has none)", spec.id)))
                }
                _ => {}
            }
        }

        let model_source = |name: &str, v: &Option<String>| -> Result<ModelSource, ConfigError> {
            v.as_deref().map_or(Ok(ModelSource::TrueModel), |s| s.parse().map_err(|e| field(name, e)))
        };
        let mut study = StudyConfig::new(self.n, self.replicates, self.master_seed);
        study.frameworks = frameworks;
        study.estimators = estimators;
        study.ps_for_generation = model_source("ps_for_generation", &self.ps_for_generation)?;
        study.outcome_for_generation = model_source("outcome_for_generation", &self.outcome_for_generation)?;
        study.replicate_size = self.replicate_size;

        let source = match source_data {
            None => None,
            Some(data) => {
                let truths = source_truths(&data.w, &spec.outcome, spec.msm_design.as_deref()).map_err(|e| field("source_file", e))?;
                Some(SourceDataset {
                    data,
                    scenario_id: spec.id.clone(),
                    seed: self.master_seed,
                    truths,
                })
            }
        };

        Ok(ResolvedRun {
            spec,
            study,
            estimands,
            n_sources: self.n_sources,
            output_dir: self.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
            source,
        })
    }
}

/// Built-in configs: `(name, scenario, n)`.
pub const BUILTIN_CONFIGS: &[(&str, &str, usize)] = &[
    ("s1_n100", "S1", 100),
    ("s1_n1000", "S1", 1000),
    ("s1_n10000", "S1", 10_000),
    ("s1a_n1000", "S1a", 1000),
    ("s2_n100", "S2", 100),
    ("s2_n1000", "S2", 1000),
    ("s2_n10000", "S2", 10_000),
    ("s2a_n1000", "S2a", 1000),
    ("s3_n10000", "S3", 10_000),
    ("s4a_n100", "S4a", 100),
    ("s4a_n1000", "S4a", 1000),
    ("s4a_n10000", "S4a", 10_000),
    ("s4b_n100", "S4b", 100),
    ("s4b_n1000", "S4b", 1000),
    ("s4b_n10000", "S4b", 10_000),
];

/// Seed shared by the built-in configs.
pub const BUILTIN_SEED: u64 = 2025;

/// A built-in config: 5000 replicates up to n = 1000, 2000 above.
pub fn builtin_config(name: &str) -> Option<RunConfig> {
    let &(name, scenario, n) = BUILTIN_CONFIGS.iter().find(|(c, _, _)| *c == name)?;
    let strings = |v: &[&str]| Some(v.iter().map(|s| s.to_string()).collect());
    let (estimators, estimands) = match scenario {
        "S1" | "S1a" => (None, strings(&["ate"])),
        "S2" | "S2a" | "S3" => (None, strings(&["ate", "rr"])),
        _ => (strings(&["msm"]), strings(&["logcor"])),
    };
    Some(RunConfig {
        n,
        replicates: if n <= 1000 { 5000 } else { 2000 },
        master_seed: BUILTIN_SEED,
        frameworks: default_frameworks(),
        estimators,
        estimands,
        n_sources: 1,
        output_dir: Some(PathBuf::from(format!("{DEFAULT_OUTPUT_DIR}/{name}"))),
        ps_for_generation: None,
        outcome_for_generation: None,
        replicate_size: None,
        source_file: None,
        scenario: ScenarioRef::Builtin(scenario.to_string()),
    })
}
