use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use plasmode_cli::commands::{self, Overrides};
use plasmode_cli::config::{builtin_config, ConfigError, ScenarioConfig, ScenarioRef, BUILTIN_CONFIGS};
use plasmode_cli::CliError;
use plasmode_core::Estimand;

/// Plasmode simulation studies of causal effect estimators.
#[derive(Parser)]
#[command(name = "plasmode", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo study and write replicates and summaries.
    Run(Common),
    /// Report the Sample Treatment IPTW bias of the source.
    Oracle(Common),
    /// Draw a source dataset and write it with its truths.
    GenerateSource(Common),
    /// Summarize an existing replicates.csv.
    Report {
        replicates: PathBuf,
        /// truths.csv written next to the replicates.
        #[arg(long)]
        truths: PathBuf,
        /// Estimand to summarize; repeatable. Defaults to every estimand
        /// with a truth.
        #[arg(long = "estimand")]
        estimands: Vec<Estimand>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// List the built-in configs, or print one as TOML.
    Configs {
        #[arg(long)]
        show: Option<String>,
        /// With --show, write the scenario as an inline table.
        #[arg(long, requires = "show")]
        inline: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Config file, or the name of a built-in config.
    config: String,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
    /// Overrides master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides output_dir.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            workers: self.workers.map(|w| w as usize),
            seed: self.seed,
            output_dir: self.output_dir.clone(),
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(c) => {
            let out = commands::run(&c.config, &c.overrides())?;
            println!("wrote {}", out.display());
        }
        Command::Oracle(c) => {
            let (out, o) = commands::oracle_command(&c.config, &c.overrides())?;
            print!("{}", plasmode_cli::output::oracle_csv(&o));
            eprintln!("wrote {}", out.join("oracle.csv").display());
        }
        Command::GenerateSource(c) => {
            let out = commands::generate_source_command(&c.config, &c.overrides())?;
            println!("wrote {}", out.display());
        }
        Command::Report {
            replicates,
            truths,
            estimands,
            output_dir,
        } => {
            let md = commands::report(&replicates, &truths, &estimands, output_dir.as_deref())?;
            print!("{md}");
        }
        Command::Configs { show: Some(name), inline } => {
            let mut c = builtin_config(&name).ok_or(ConfigError::NotFound(name))?;
            if inline {
                if let ScenarioRef::Builtin(id) = &c.scenario {
                    let spec = plasmode_core::builtin(id)?;
                    let table = ScenarioConfig::from_spec(&spec).expect("built-in scenarios are generated");
                    c.scenario = ScenarioRef::Inline(Box::new(table));
                }
            }
            print!("{}", c.to_toml());
        }
        Command::Configs { show: None, .. } => {
            for (name, scenario, n) in BUILTIN_CONFIGS {
                println!("{name:<12} {scenario:<4} n = {n}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
