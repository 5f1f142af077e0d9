use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flowsafe_core::agents::SacVariant;
use flowsafe_harness::{compare, density, evaluate, train, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(
    name = "flowsafe",
    version,
    about = "Train and analyze safe-navigation agents"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one run per configured seed; writes metrics CSVs and checkpoints.
    Train {
        /// TOML experiment config; omitted fields use benchmark defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Train only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the learner variant:
        /// unconstrained|penalty|lagrangian|constrained.
        #[arg(long)]
        variant: Option<String>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a checkpointed policy and print a summary report.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample from the policy instead of taking its mean action.
        #[arg(long)]
        stochastic: bool,
    },
    /// Export an action-density grid and staged sample clouds at one state.
    ExportDensity {
        #[arg(long)]
        checkpoint: PathBuf,
        /// State as `x,y,battery,goal_x,goal_y`.
        #[arg(long, allow_hyphen_values = true)]
        state: String,
        #[arg(long, default_value_t = 200)]
        resolution: usize,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize metrics CSVs grouped by run family (stem minus `_seed<n>`).
    Compare { files: Vec<PathBuf> },
}

fn parse_variant(s: &str) -> Result<SacVariant, HarnessError> {
    match s {
        "unconstrained" => Ok(SacVariant::Unconstrained),
        "penalty" => Ok(SacVariant::Penalty),
        "lagrangian" => Ok(SacVariant::Lagrangian),
        "constrained" => Ok(SacVariant::Constrained),
        other => Err(HarnessError::InvalidArg(format!(
            "unknown variant {other:?} (expected unconstrained|penalty|lagrangian|constrained)"
        ))),
    }
}

fn parse_state(s: &str) -> Result<[f64; 5], HarnessError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| HarnessError::InvalidArg(format!("state {s:?}: {e}")))?;
    parts.try_into().map_err(|_| {
        HarnessError::InvalidArg("state needs exactly 5 numbers: x,y,battery,goal_x,goal_y".into())
    })
}

fn run() -> Result<(), HarnessError> {
    match Cli::parse().cmd {
        Cmd::Train {
            config,
            seed,
            variant,
            out,
        } => {
            let mut cfg = match config {
                Some(path) => ExperimentConfig::load(&path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(v) = variant {
                cfg.experiment.variant = parse_variant(&v)?;
            }
            if let Some(dir) = out {
                cfg.experiment.out_dir = dir;
            }
            if let Some(s) = seed {
                cfg.experiment.seeds = vec![s];
            }
            cfg.validate()?;
            for &s in &cfg.experiment.seeds.clone() {
                let outcome = train::train(&cfg, s)?;
                println!(
                    "{}",
                    serde_json::to_string(&outcome).expect("outcome serializes")
                );
            }
            Ok(())
        }
        Cmd::Evaluate {
            checkpoint,
            episodes,
            seed,
            stochastic,
        } => {
            let report = evaluate::evaluate(&checkpoint, episodes, seed, stochastic)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            Ok(())
        }
        Cmd::ExportDensity {
            checkpoint,
            state,
            resolution,
            samples,
            seed,
            out,
        } => {
            let state = parse_state(&state)?;
            let export = density::export_density(&checkpoint, state, resolution, samples, seed)?;
            density::write_density(&export, &out)?;
            println!(
                "{}",
                serde_json::json!({
                    "out": out.display().to_string(),
                    "grid": export.grid,
                    "integral": export.integral,
                    "samples": export.stages.first().map_or(0, |s| s.points.len()),
                })
            );
            Ok(())
        }
        Cmd::Compare { files } => {
            let report = compare::compare(&files)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
