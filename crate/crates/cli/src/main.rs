//! `torilab`: runs one experiment from a JSON config and writes CSV/JSON.
//!
//! Exit codes: 0 success, 1 I/O, 2 invalid input, 3 numerical failure,
//! 4 failed `compare --assert`.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use output::Sink;

/// Environment override of the output directory.
const OUT_DIR_VAR: &str = "TORILAB_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Validation(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
}

#[derive(Parser)]
#[command(name = "torilab", version, about = "Normal forms, quasi-eigenvalues and oracles near Diophantine tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config and the environment.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for data-parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Averaging, classical and quantum normal forms (JSON).
    NormalForm,
    /// Quasi-eigenvalue lattice in the rectangle (CSV).
    Quantize,
    /// Matrix oracle eigenvalues (CSV).
    Oracle,
    /// Lattice against oracle (JSON + CSV).
    Compare {
        /// Exit 4 unless counts agree and errors stay within the budget.
        #[arg(long)]
        assert: bool,
    },
    /// Flow and resonant averages, decay fits (CSV).
    Average,
    /// Rotation numbers, torus averages and good sets of a surface of revolution.
    Surfrev,
    /// Hamilton–Jacobi phase (JSON).
    HjSolve,
    /// Harmonic quartic averages and critical values (JSON).
    BarrierTop,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return match f {
            Failure::Validation(_) => 2,
            Failure::Assertion(_) => 4,
        };
    }
    if let Some(e) = err.downcast_ref::<torilab::Error>() {
        return if e.is_numerical() { 3 } else { 2 };
    }
    if err.downcast_ref::<serde_json::Error>().is_some() {
        return 2;
    }
    1
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let path = cli.config.as_ref().ok_or_else(|| Failure::Validation("--config is required".into()))?;
    let cfg = ExperimentConfig::load(path)?;
    let dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_VAR).map(PathBuf::from))
        .or_else(|| cfg.outputs.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let sink = Sink::new(dir, cfg.outputs.formats.clone())?;
    match cli.command {
        Command::NormalForm => commands::run_normal_form(&cfg, &sink),
        Command::Quantize => commands::run_quantize(&cfg, &sink),
        Command::Oracle => commands::run_oracle(&cfg, &sink),
        Command::Compare { assert } => commands::run_compare(&cfg, &sink, assert),
        Command::Average => commands::run_average(&cfg, &sink),
        Command::Surfrev => commands::run_surfrev(&cfg, &sink),
        Command::HjSolve => commands::run_hj_solve(&cfg, &sink),
        Command::BarrierTop => commands::run_barrier_top(&cfg, &sink),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
