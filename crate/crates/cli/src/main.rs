use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use tsi_cli::config::{ExperimentConfig, ExperimentKind, Quadrature};

/// Transformed snapshot interpolation experiments.
#[derive(Parser, Debug)]
#[command(name = "tsi", version, about)]
struct Args {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// two_shocks | shock_rwave | rate_study | nwidth_demo
    #[arg(long)]
    experiment: Option<String>,
    /// Output directory for the CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Spatial mesh size.
    #[arg(long)]
    h: Option<f64>,
    /// Refinement stop threshold on the training error.
    #[arg(long)]
    tol: Option<f64>,
    /// fine | coarse
    #[arg(long)]
    quadrature: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

fn build_config(args: &Args) -> Result<ExperimentConfig> {
    // the experiment decides the defaults, so resolve it first
    let mut kind = None;
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)?;
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                if k.trim() == "experiment" {
                    kind = Some(ExperimentKind::parse(v.trim())?);
                }
            }
        }
    }
    if let Some(name) = &args.experiment {
        kind = Some(ExperimentKind::parse(name)?);
    }
    let mut cfg = ExperimentConfig::defaults(kind.unwrap_or(ExperimentKind::TwoShocks));
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    if let Some(name) = &args.experiment {
        cfg.experiment = ExperimentKind::parse(name)?;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(h) = args.h {
        cfg.h = h;
    }
    if let Some(tol) = args.tol {
        cfg.stop_tol = tol;
    }
    if let Some(q) = &args.quadrature {
        cfg.quadrature = Quadrature::parse(q)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match build_config(&args) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::FAILURE;
        }
    };
    match tsi_cli::run(&cfg) {
        Ok(output) => {
            println!(
                "{},{},{},{},{}",
                output.row.experiment,
                output.row.snapshots_tsi,
                output.row.snapshots_all,
                output.row.error_train,
                output.row.error_sample
            );
            for f in &output.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
