use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use bats_v2x::harness::{run_experiment, Experiment, SimConfig, SimError};

/// Two-phase vehicular content distribution simulator.
#[derive(Parser, Debug)]
#[command(name = "simulate", version)]
struct Args {
    /// Configuration file (`key = value`); defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trials; overrides the configuration.
    #[arg(long)]
    trials: Option<usize>,
    /// speed | groupsize | rankcdf | delay | rate | dynamics | single
    #[arg(long)]
    experiment: Option<String>,
    /// Output directory for CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Write per-vehicle reception traces (single experiment only).
    #[arg(long)]
    trace: bool,
}

fn config(args: &Args) -> Result<SimConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => SimConfig::load(path).map_err(|e| e.to_string())?,
        None => SimConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(name) = &args.experiment {
        cfg.experiment = Experiment::parse(name).ok_or_else(|| format!("unknown experiment `{name}`"))?;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match config(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_experiment(&cfg, &args.out, args.trace) {
        Ok(out) => {
            for f in out.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(SimError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("simulation error: {e}");
            ExitCode::from(3)
        }
    }
}
