//! The subcommands, as library functions so tests can call them directly.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use plasmode_core::datamodel::{read_records_csv, read_truths_csv, write_dataset_csv, write_records_csv, write_truths_csv};
use plasmode_core::harness::{aggregate_sources, run_on_source, study_source, MonteCarloRun, SourceSummary};
use plasmode_core::oracle::{oracle_for_source, OracleReport};
use plasmode_core::plasmode::GenerationModels;
use plasmode_core::{generate_source, Estimand, Framework, ScenarioSpec, SourceDataset, StudyConfig};
use serde_json::json;

use crate::config::{ResolvedRun, RunConfig};
use crate::output::{aggregate_csv, aggregate_markdown, oracle_csv, summary_csv, summary_markdown, summarize_all};
use crate::CliError;

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

/// A config with overrides applied, plus its resolved form.
pub struct Prepared {
    pub config: RunConfig,
    pub run: ResolvedRun,
}

pub fn prepare(config_arg: &str, ov: &Overrides) -> Result<Prepared, CliError> {
    let (mut config, base) = RunConfig::load(config_arg)?;
    if let Some(seed) = ov.seed {
        config.master_seed = seed;
    }
    if let Some(dir) = &ov.output_dir {
        config.output_dir = Some(dir.clone());
    }
    let mut run = config.resolve(&base)?;
    run.study.workers = ov.workers.unwrap_or(0);
    Ok(Prepared { config, run })
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(io(&path))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io(dir))
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// The fixed source of the config, or one drawn with `seed`.
fn source_for(r: &ResolvedRun, seed: u64) -> Result<SourceDataset, CliError> {
    match &r.source {
        Some(s) => Ok(s.clone()),
        None => Ok(generate_source(&r.spec, r.study.n, seed)?),
    }
}

/// Sample Treatment oracle at the source-level propensity fit, using the
/// outcome model that generation actually uses.
fn oracle(spec: &ScenarioSpec, study: &StudyConfig, source: &SourceDataset) -> Result<OracleReport, CliError> {
    let gm = GenerationModels::prepare(spec, source, &study.plasmode_config(Framework::SampleTreatment))?;
    Ok(oracle_for_source(source, &spec.treatment.design(), &gm.outcome)?)
}

/// Writes the files of one source's run into `dir`.
fn write_source_outputs(
    dir: &Path,
    title: &str,
    run: &MonteCarloRun,
    estimands: &[Estimand],
    oracle: Option<&OracleReport>,
) -> Result<Vec<plasmode_core::MetricsSummary>, CliError> {
    create_dir(dir)?;
    write_dataset_csv(&dir.join("source.csv"), &run.source.data)?;
    write_records_csv(&dir.join("replicates.csv"), &run.records)?;
    write_truths_csv(&dir.join("truths.csv"), &run.truths)?;
    let rows = summarize_all(&run.records, &run.truths, estimands)?;
    write(dir, "summary.csv", &summary_csv(&rows))?;
    write(dir, "summary.md", &summary_markdown(title, &run.truths, &rows))?;
    if let Some(o) = oracle {
        write(dir, "oracle.csv", &oracle_csv(o))?;
    }
    Ok(rows)
}

/// The config as run, with defaulted lists filled in. The output directory
/// is left out so that runs differing only in where they write produce
/// identical files.
fn echo_config(config: &RunConfig, r: &ResolvedRun) -> String {
    RunConfig {
        output_dir: None,
        estimators: Some(r.study.estimators.iter().map(|e| e.to_string()).collect()),
        estimands: Some(r.estimands.iter().map(|e| e.to_string()).collect()),
        ..config.clone()
    }
    .to_toml()
}

fn title(r: &ResolvedRun, seed: u64) -> String {
    format!(
        "{}: n = {}, {} replicates, seed {}",
        r.spec.id, r.study.n, r.study.replicates, seed
    )
}

/// `plasmode run`. Returns the output directory.
pub fn run(config_arg: &str, ov: &Overrides) -> Result<PathBuf, CliError> {
    let started = unix_now();
    let clock = Instant::now();
    let Prepared { config, run: r } = prepare(config_arg, ov)?;
    let out = r.output_dir.clone();
    create_dir(&out)?;
    let pool = r.study.pool()?;
    let workers = pool.current_num_threads();

    if r.n_sources == 1 {
        let source = source_for(&r, r.study.master_seed)?;
        let mc = pool.install(|| run_on_source(&r.spec, &source, &r.study))?;
        let o = oracle(&r.spec, &r.study, &source).ok();
        write_source_outputs(&out, &title(&r, r.study.master_seed), &mc, &r.estimands, o.as_ref())?;
    } else {
        let mut sources = Vec::with_capacity(r.n_sources);
        for k in 0..r.n_sources {
            let (mc, s) = study_source(&r.spec, &r.study, k, &r.estimands)?;
            let dir = out.join(format!("source_{k:02}"));
            let rows = write_source_outputs(&dir, &title(&r, s.seed), &mc, &r.estimands, s.oracle.as_ref())?;
            eprintln!("source {}/{} done", k + 1, r.n_sources);
            sources.push(SourceSummary { summaries: rows, ..s });
        }
        let agg = aggregate_sources(&sources);
        write(&out, "aggregate.csv", &aggregate_csv(&agg))?;
        let heading = format!("{}: bias:SE across {} sources", r.spec.id, r.n_sources);
        write(&out, "aggregate.md", &aggregate_markdown(&heading, &agg))?;
    }

    write(&out, "config.toml", &echo_config(&config, &r))?;
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": config_arg,
        "scenario": r.spec.id,
        "workers": workers,
        "started_unix": started,
        "finished_unix": unix_now(),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
    });
    write(&out, "metadata.json", &(serde_json::to_string_pretty(&meta).expect("json") + "\n"))?;
    Ok(out)
}

/// `plasmode oracle`. Writes `oracle.csv` and returns the report.
pub fn oracle_command(config_arg: &str, ov: &Overrides) -> Result<(PathBuf, OracleReport), CliError> {
    let Prepared { run: r, .. } = prepare(config_arg, ov)?;
    let source = source_for(&r, r.study.master_seed)?;
    let o = oracle(&r.spec, &r.study, &source)?;
    create_dir(&r.output_dir)?;
    write(&r.output_dir, "oracle.csv", &oracle_csv(&o))?;
    Ok((r.output_dir, o))
}

/// `plasmode generate-source`. Writes `source.csv` and `truths.csv`.
pub fn generate_source_command(config_arg: &str, ov: &Overrides) -> Result<PathBuf, CliError> {
    let Prepared { run: r, .. } = prepare(config_arg, ov)?;
    if r.source.is_some() {
        return Err(crate::config::ConfigError::Field {
            field: "source_file".into(),
            message: "generate-source draws a new source; remove source_file".into(),
        }
        .into());
    }
    let source = generate_source(&r.spec, r.study.n, r.study.master_seed)?;
    create_dir(&r.output_dir)?;
    write_dataset_csv(&r.output_dir.join("source.csv"), &source.data)?;
    write_truths_csv(&r.output_dir.join("truths.csv"), &source.truths)?;
    Ok(r.output_dir)
}

/// `plasmode report`: summaries of an existing replicate file. Returns the
/// text report; files are written only when `output_dir` is given.
pub fn report(
    replicates: &Path,
    truths: &Path,
    estimands: &[Estimand],
    output_dir: Option<&Path>,
) -> Result<String, CliError> {
    let records = read_records_csv(replicates)?;
    let t = read_truths_csv(truths)?;
    let estimands: Vec<Estimand> = if estimands.is_empty() {
        [Estimand::Ate, Estimand::Rr, Estimand::Logcor]
            .into_iter()
            .filter(|&e| t.value(e).is_some())
            .collect()
    } else {
        estimands.to_vec()
    };
    let rows = summarize_all(&records, &t, &estimands)?;
    let md = summary_markdown(&format!("Report of {}", replicates.display()), &t, &rows);
    if let Some(dir) = output_dir {
        create_dir(dir)?;
        write(dir, "summary.csv", &summary_csv(&rows))?;
        write(dir, "summary.md", &md)?;
    }
    Ok(md)
}
