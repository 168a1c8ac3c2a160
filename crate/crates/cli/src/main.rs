//! `crowdcast`: run the forecasting pipeline stage by stage or end to end.

mod config;
mod error;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{preset_names, RunConfig};
use crate::error::CliError;
use crate::stages::Ctx;

#[derive(Debug, Parser)]
#[command(
    name = "crowdcast",
    version,
    about = "Crowd-forecast aggregation, Bayesian network and logistic regression pipeline"
)]
struct Cli {
    /// TOML run configuration; applied on top of --preset when both are given.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Bundled configuration (see `crowdcast presets`).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Overrides the configured global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory [default: config `out`, else ./crowdcast-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for stage-internal parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Parse and filter the tournament CSV named in [input].
    Ingest,
    /// Generate a seeded synthetic tournament from [synth].
    Synth,
    /// Consensus, predictors and the tier dataset.
    Features,
    /// Total mutual information against the number of levels.
    MiCurve,
    /// Coalesce predictors to their target level counts.
    Discretize,
    /// Fit every selected model family on all rows.
    Train,
    /// Cross-validated AUC per family.
    Evaluate,
    /// Assumption checks for the continuous logistic model.
    Diagnose,
    /// Print the summary table.
    Report,
    /// All stages in order.
    Run,
    /// List bundled presets.
    Presets,
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Command::Presets = cli.command {
        for name in preset_names() {
            println!("{name}");
        }
        return Ok(());
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let mut cfg = RunConfig::load(cli.preset.as_deref(), cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("crowdcast-out"));
    let mut ctx = Ctx::new(cfg, out)?;
    let res = match cli.command {
        Command::Ingest => stages::ingest(&mut ctx),
        Command::Synth => stages::synth(&mut ctx),
        Command::Features => stages::features(&mut ctx),
        Command::MiCurve => stages::mi_curve_stage(&mut ctx),
        Command::Discretize => stages::discretize(&mut ctx),
        Command::Train => stages::train(&mut ctx),
        Command::Evaluate => stages::evaluate(&mut ctx),
        Command::Diagnose => stages::diagnose(&mut ctx),
        Command::Report => stages::report(&mut ctx),
        Command::Run => stages::run_all(&mut ctx),
        Command::Presets => unreachable!("handled above"),
    };
    if res.is_err() {
        ctx.rollback();
    }
    res
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("crowdcast: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
