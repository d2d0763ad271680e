//! `loewner-lab`: reproducible Loewner-chain experiments from the command line.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use loewner_lab::error::ErrorKind;
use loewner_lab::{Execution, LoewnerError};
use serde_json::json;

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

const EXIT_DOMAIN: u8 = 1;
const EXIT_ACCURACY: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] LoewnerError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.kind() {
                ErrorKind::Domain => EXIT_DOMAIN,
                ErrorKind::Accuracy => EXIT_ACCURACY,
                ErrorKind::Input => EXIT_USAGE,
            },
            CliError::Usage(_) => EXIT_USAGE,
        }
    }
}

const AFTER_HELP: &str = "\
Conventions: angles are in radians; times are capacity times t with hcap = 2t.

Each run writes into --out:
  summary.json   schema_version, command, the fully resolved config, results
  metadata.json  timestamps, version and worker count (kept apart so data files are reproducible)
  *.csv          tables, listed under each command's --help

Exit status: 0 success, 1 domain or geometry error, 2 numerical accuracy error,
64 bad usage or malformed input. LOEWNER_LAB_THREADS caps the worker count.";

#[derive(Debug, Parser)]
#[command(name = "loewner-lab", version, about = "Deterministic and stochastic Loewner chain experiments", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; flags below override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "loewner-out")]
    out: PathBuf,

    /// Seed for stochastic commands (required by them).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Relative tolerance of the Loewner-flow integrator.
    #[arg(long, global = true, value_name = "F")]
    tolerance: Option<f64>,

    /// Capacity-time resolution of traces (finest level for reverse-check).
    #[arg(long, global = true, value_name = "F")]
    resolution: Option<f64>,

    /// Monte Carlo paths, or welding grid size.
    #[arg(long, global = true, value_name = "N")]
    samples: Option<usize>,

    /// Suppress the one-line report on stdout.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Loewner energy ½∫λ̇² of `driver` up to `horizon`.
    ///
    /// Writes energy.csv with columns t0,t1,energy (one row per linear piece).
    Energy,
    /// Trace of `driver` up to `horizon` at `resolution`.
    ///
    /// Writes trace.csv with columns t,re,im.
    Trace,
    /// Driving function of the curve in `curve` (t,re,im CSV; t ignored) or `points`.
    ///
    /// Writes driver.csv (t,lambda) and curve.csv (t,re,im, re-timed by capacity).
    Invert,
    /// Energy of Rev(λ) against I(λ) over refinement `levels`.
    ///
    /// Writes reversal.csv with columns resolution,tail_capacity,energy_fwd,energy_rev,rel_err.
    ReverseCheck,
    /// Minimal-energy driver through e^{iθ} (`theta`) or through `points` in order.
    ///
    /// Writes driver.csv with columns t,lambda.
    Minimizer,
    /// Numerical minimizer of the energy over the constraint set `constraints`.
    ///
    /// Writes driver.csv with columns t,lambda.
    ConstrainedMin,
    /// Monte Carlo passage probability of SLE_κ (`kappa`) for `constraints`.
    ///
    /// Summary only: kappa, constraint, p, ci, n, seed.
    SlePassage,
    /// −κ ln P along a decreasing `kappas` sequence.
    ///
    /// Writes rates.csv with columns kappa,rate,reference.
    LdRate,
    /// Restriction identity for `driver` against the slit hull `hull` at `times`.
    ///
    /// Writes identity.csv with columns t,lhs,rhs,residual.
    Restriction,
    /// Two-slit commutation for slits `w` (from 0, up to `t`) and `u` (from ∞, up to `s`).
    ///
    /// Writes commutation.csv with columns resolution,t,lhs,rhs,residual.
    Commute,
    /// Conformal welding pairs of `driver` at `horizon` over `grid`.
    ///
    /// Writes welding.csv with columns x_pos,x_neg,curve_time,ratio,spacing_ratio.
    Welding,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Energy => "energy",
            Command::Trace => "trace",
            Command::Invert => "invert",
            Command::ReverseCheck => "reverse-check",
            Command::Minimizer => "minimizer",
            Command::ConstrainedMin => "constrained-min",
            Command::SlePassage => "sle-passage",
            Command::LdRate => "ld-rate",
            Command::Restriction => "restriction",
            Command::Commute => "commute",
            Command::Welding => "welding",
        }
    }
}

fn configure_threads() -> Result<usize, CliError> {
    if let Ok(v) = std::env::var("LOEWNER_LAB_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Usage(format!("LOEWNER_LAB_THREADS must be a positive integer, got {v:?}")))?;
        // fails only if the pool already exists, which it cannot here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn unix_seconds(t: SystemTime) -> f64 {
    t.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let threads = configure_threads()?;
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(c) = &cfg.command {
        if c != cli.command.name() {
            return Err(CliError::Usage(format!(
                "config is for `{c}` but the command is `{}`",
                cli.command.name()
            )));
        }
    }
    cfg.command = Some(cli.command.name().to_string());
    cfg.seed = cli.seed.or(cfg.seed);
    cfg.tolerance = cli.tolerance.or(cfg.tolerance);
    cfg.resolution = cli.resolution.or(cfg.resolution);
    cfg.samples = cli.samples.or(cfg.samples);
    cfg.validate()?;

    let output = commands::run(cli.command, &mut cfg, Execution::default())?;

    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", cli.out.display())))?;
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "command": cli.command.name(),
        "config": cfg,
        "results": output.results,
        "files": output.tables.iter().map(|(name, _)| *name).collect::<Vec<_>>(),
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    write_file(&cli.out.join("summary.json"), text.as_bytes())?;
    for (name, bytes) in &output.tables {
        write_file(&cli.out.join(name), bytes)?;
    }
    let metadata = json!({
        "schema_version": SCHEMA_VERSION,
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix": unix_seconds(started),
        "finished_unix": unix_seconds(SystemTime::now()),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "threads": threads,
    });
    let mut meta = serde_json::to_string_pretty(&metadata).expect("metadata serializes");
    meta.push('\n');
    write_file(&cli.out.join("metadata.json"), meta.as_bytes())?;

    Ok(format!(
        "{}: wrote summary.json{} to {}",
        cli.command.name(),
        output.tables.iter().map(|(n, _)| format!(", {n}")).collect::<String>(),
        cli.out.display()
    ))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(&cli) {
        Ok(line) => {
            if !cli.quiet {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("loewner-lab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
