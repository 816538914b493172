//! Command-line experiments for generalization bounds and privacy leakage
//! of centralized, distributed and federated Gaussian mean estimation.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use commands::{Outcome, RunOptions};
use config::{Format, LoadedConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "fedinfo", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the closed forms against the coefficient method and Monte Carlo.
    LemmaCheck(CommonArgs),
    /// Privacy leakage versus number of active users.
    Figure1(CommonArgs),
    /// Generalization bounds over a parameter grid.
    BoundsSweep(CommonArgs),
    /// Per-round Monte Carlo generalization error of the federated protocol.
    GenExperiment(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; defaults to the config's `output`, then stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config trial count.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Record wall-clock time per row (output is then not reproducible).
    #[arg(long)]
    pub timings: bool,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::LemmaCheck(_) => "lemma-check",
            Command::Figure1(_) => "figure1",
            Command::BoundsSweep(_) => "bounds-sweep",
            Command::GenExperiment(_) => "gen-experiment",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::LemmaCheck(a)
            | Command::Figure1(a)
            | Command::BoundsSweep(a)
            | Command::GenExperiment(a) => a,
        }
    }
}

fn infer_format(path: Option<&Path>) -> Format {
    match path.and_then(Path::extension).and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        _ => Format::Csv,
    }
}

/// Runs one command to completion, writing its table. Returns the failed
/// checks; an empty list means success.
pub fn execute(command: &Command) -> Result<Outcome, CliError> {
    let args = command.args();
    let cfg = LoadedConfig::read(&args.config)?;
    let opts = RunOptions {
        seed: args.seed,
        trials: args.trials,
        timings: args.timings,
    };
    let outcome = match command {
        Command::LemmaCheck(_) => commands::lemma_check::run(&cfg, &opts)?,
        Command::Figure1(_) => commands::figure1::run(&cfg, &opts)?,
        Command::BoundsSweep(_) => commands::bounds_sweep::run(&cfg, &opts)?,
        Command::GenExperiment(_) => commands::gen_experiment::run(&cfg, &opts)?,
    };
    let out = args.out.clone().or_else(|| cfg.config.output.clone());
    let format = args
        .format
        .or(cfg.config.format)
        .unwrap_or_else(|| infer_format(out.as_deref()));
    let bytes = outcome.table.encode(format)?;
    match &out {
        Some(path) => std::fs::write(path, bytes)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(&bytes)?;
            stdout.flush()?;
        }
    }
    Ok(outcome)
}

/// Exit status: 0 when every check passes, 1 on a failed check or runtime
/// error, 2 on invalid input.
pub fn run(cli: &Cli) -> u8 {
    let name = cli.command.name();
    match execute(&cli.command) {
        Ok(outcome) if outcome.failures.is_empty() => {
            log::info!(
                "{name}: {} rows, all checks passed",
                outcome.table.rows.len()
            );
            0
        }
        Ok(outcome) => {
            for f in &outcome.failures {
                eprintln!("{name}: FAIL {f}");
            }
            eprintln!(
                "{name}: {} of {} rows failed",
                outcome.failures.len(),
                outcome.table.rows.len()
            );
            1
        }
        Err(e) => {
            eprintln!("{name}: error: {e}");
            e.exit_code()
        }
    }
}

/// Reads `FEDINFO_THREADS` (0 or unset = automatic).
pub fn thread_count(value: Option<&str>) -> Result<usize, CliError> {
    match value.map(str::trim) {
        None | Some("") => Ok(0),
        Some(v) => v.parse().map_err(|_| {
            CliError::Input(format!(
                "FEDINFO_THREADS must be a non-negative integer (got {v:?})"
            ))
        }),
    }
}
