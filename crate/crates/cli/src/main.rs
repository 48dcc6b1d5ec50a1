//! `asis`: batch front end for simulation, stability analysis and rate design.
//!
//! Exit codes: 0 success, 2 validation error, 3 infeasible design,
//! 4 numerical failure, 1 for failures writing outputs.

mod commands;
mod config;
mod error;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Outputs;
use crate::config::{GenerateSpec, GraphKind, LoadedConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "asis", version, about = "Adaptive SIS spreading: simulate, certify, design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config, TOML or JSON (by extension).
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set simulation.runs=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GraphKind,
    #[arg(short, long)]
    n: usize,
    /// Edge probability for erdos_renyi.
    #[arg(short, long)]
    p: Option<f64>,
    /// Links per new node for preferential_attachment.
    #[arg(long)]
    attach: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Edge list, or JSON when the name ends in `.json`.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo ensemble plus one recorded trajectory.
    Simulate(RunArgs),
    /// Spectral stability report of the bounding system.
    Analyze(RunArgs),
    /// Optimal homogeneous cutting and rewiring rates.
    DesignHomo(RunArgs),
    /// Optimal per-node cutting rates by geometric programming.
    DesignHetero(RunArgs),
    /// Write a seeded random or structured graph.
    GenGraph(GenArgs),
    /// Check a config without running anything.
    ValidateConfig(ConfigArgs),
}

fn load(a: &ConfigArgs) -> Result<LoadedConfig, CliError> {
    Ok(LoadedConfig::load(&a.config, &a.set)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => {
            let lc = load(&a.config)?;
            commands::simulate_cmd(&lc, &Outputs::new(&lc, a.out.as_deref()))
        }
        Command::Analyze(a) => {
            let lc = load(&a.config)?;
            commands::analyze_cmd(&lc, &Outputs::new(&lc, a.out.as_deref()))
        }
        Command::DesignHomo(a) => {
            let lc = load(&a.config)?;
            commands::design_homo_cmd(&lc, &Outputs::new(&lc, a.out.as_deref()))
        }
        Command::DesignHetero(a) => {
            let lc = load(&a.config)?;
            commands::design_hetero_cmd(&lc, &Outputs::new(&lc, a.out.as_deref()))
        }
        Command::GenGraph(a) => {
            let spec = GenerateSpec {
                kind: a.kind,
                n: a.n,
                p: a.p,
                attach: a.attach,
                seed: a.seed,
            };
            commands::gen_graph_cmd(&spec, &a.out)
        }
        Command::ValidateConfig(a) => commands::validate_cmd(&load(&a)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("asis: {e}");
            e.exit_code()
        }
    }
}
