//! `gfstop`: runs one scenario and writes `<name>*.csv` plus
//! `<name>.meta.json` into the output directory.

mod commands;
mod config;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::commands::*;
use crate::config::{resolve, ConfigFile};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "gfstop", version, about = "Scenario runner for two-period stopping games with biased learners")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// JSON file with parameters, or a scenario record {command, seed, name, config} such as an emitted sidecar.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Base name for output files; defaults to the command name.
    #[arg(long, global = true)]
    name: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Closed-form pseudo-true parameters at one or more cutoffs.
    PseudoTrue(PseudoTrueArgs),
    /// Steady-state beliefs and cutoffs over a grid of games and biases.
    SteadyState(SteadyStateArgs),
    /// Large-generation belief and cutoff traces.
    Dynamics(DynamicsArgs),
    /// Seeded runs of agents learning one after another on a posterior grid.
    Sequential(SequentialArgs),
    /// Finite-sample experiments.
    Montecarlo(MonteCarloArgs),
    /// Pseudo-true means with more than two periods.
    Multiperiod(MultiPeriodArgs),
    /// Method-of-moments estimates and dynamics for non-Gaussian families.
    Mom(MomArgs),
    /// Exact likelihood tables for the finite urn.
    Freddy(FreddyArgs),
    /// Numerical KL minimization next to the closed forms.
    KlOracle(KlOracleArgs),
    /// Paired traces of two societies with their predicted orderings.
    Compare(CompareArgs),
    /// Run the scenario recorded in --config (its `command` field picks the subcommand).
    Run,
}

fn flags<A: serde::Serialize>(a: &A) -> Value {
    serde_json::to_value(a).expect("flag structs serialize")
}

impl Cmd {
    fn name_and_flags(&self) -> Option<(&'static str, Value)> {
        Some(match self {
            Cmd::PseudoTrue(a) => ("pseudo-true", flags(a)),
            Cmd::SteadyState(a) => ("steady-state", flags(a)),
            Cmd::Dynamics(a) => ("dynamics", flags(a)),
            Cmd::Sequential(a) => ("sequential", flags(a)),
            Cmd::Montecarlo(a) => ("montecarlo", flags(a)),
            Cmd::Multiperiod(a) => ("multiperiod", flags(a)),
            Cmd::Mom(a) => ("mom", flags(a)),
            Cmd::Freddy(a) => ("freddy", flags(a)),
            Cmd::KlOracle(a) => ("kl-oracle", flags(a)),
            Cmd::Compare(a) => ("compare", flags(a)),
            Cmd::Run => return None,
        })
    }
}

struct Job<'a> {
    command: &'a str,
    flags: Value,
    file: &'a ConfigFile,
    seed: u64,
    out: &'a Path,
    name: &'a str,
}

fn execute<P: Scenario>(job: Job) -> Result<Vec<PathBuf>, CliError> {
    let params: P = resolve(&job.file.params, job.flags)?;
    params.validate()?;
    let start = Instant::now();
    let tables = params
        .run(job.seed)
        .map_err(|source| CliError::Numerical { command: job.command.into(), source })?;
    let wall = start.elapsed().as_secs_f64();
    std::fs::create_dir_all(job.out).map_err(|e| CliError::Io(format!("creating {}: {e}", job.out.display())))?;
    let mut written = tables.iter().map(|t| t.write(job.out, job.name)).collect::<Result<Vec<_>, _>>()?;
    let outputs: Vec<String> = written
        .iter()
        .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
        .collect();
    let record = json!({
        "command": job.command,
        "name": job.name,
        "seed": job.seed,
        "config": params,
        "outputs": outputs,
        "versions": { "gfstop": env!("CARGO_PKG_VERSION"), "gfstop-core": gfstop_core::VERSION },
        "threads": rayon::current_num_threads(),
        "wall_time_s": wall,
    });
    written.push(output::write_sidecar(job.out, job.name, &record)?);
    Ok(written)
}

fn dispatch(job: Job) -> Result<Vec<PathBuf>, CliError> {
    match job.command {
        "pseudo-true" => execute::<PseudoTrueParams>(job),
        "steady-state" => execute::<SteadyStateParams>(job),
        "dynamics" => execute::<DynamicsParams>(job),
        "sequential" => execute::<SequentialParams>(job),
        "montecarlo" => execute::<MonteCarloParams>(job),
        "multiperiod" => execute::<MultiPeriodParams>(job),
        "mom" => execute::<MomParams>(job),
        "freddy" => execute::<FreddyParams>(job),
        "kl-oracle" => execute::<KlOracleParams>(job),
        "compare" => execute::<CompareParams>(job),
        other => Err(CliError::config(Some("command"), format!("unknown command {other:?}"))),
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("GFSTOP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(Some("GFSTOP_THREADS"), format!("must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    configure_threads()?;
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let (command, flag_values) = match cli.command.name_and_flags() {
        Some((name, f)) => {
            if let Some(fc) = &file.command {
                if fc != name {
                    return Err(CliError::Usage(format!("config file is for `{fc}`, not `{name}`")));
                }
            }
            (name.to_string(), f)
        }
        None => {
            let fc = file.command.clone().ok_or_else(|| CliError::Usage("`run` needs --config with a `command` field".into()))?;
            (fc, json!({}))
        }
    };
    let name = cli.name.clone().or_else(|| file.name.clone()).unwrap_or_else(|| command.clone());
    if name.is_empty() || name.contains(['/', '\\']) {
        return Err(CliError::config(Some("name"), "must be a plain file stem"));
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    dispatch(Job { command: &command, flags: flag_values, file: &file, seed, out: &out, name: &name })
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("gfstop: {e}");
    eprintln!("{}", e.record());
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            return fail(&CliError::Usage(first));
        }
    };
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
