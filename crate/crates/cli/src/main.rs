mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use crate::config::RunConfig;
use crate::error::{exit, CliError};

/// Airway segmentation, quantification and group statistics.
#[derive(Parser, Debug)]
#[command(name = "airwayq", version)]
struct Cli {
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed (overrides the configured phantom seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides paths.out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic bronchial tree phantom bundle.
    Phantom,
    /// Segment the airway from an intensity volume.
    Segment(SegmentArgs),
    /// Score a predicted airway mask against ground truth.
    Eval(EvalArgs),
    /// Measure regional airway volumes and append a subject row.
    Quant(QuantArgs),
    /// Compare groups from a cohort table or summary statistics.
    Compare(CompareArgs),
    /// Evaluate the boundary-weighted loss and verify its gradient.
    LossCheck(LossCheckArgs),
}

#[derive(Args, Debug)]
struct SegmentArgs {
    /// Intensity volume in HU.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Ground-truth airway mask (needed only by the oracle predictor).
    #[arg(long)]
    gt: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    centerlines: Option<PathBuf>,
    #[arg(long)]
    tolerance_mm: Option<f64>,
}

#[derive(Args, Debug)]
struct QuantArgs {
    /// Airway mask to measure.
    #[arg(long)]
    airway: Option<PathBuf>,
    #[arg(long)]
    lung: Option<PathBuf>,
    #[arg(long)]
    regions: Option<PathBuf>,
    /// Lobar label map; without it lobes are sums of their segments.
    #[arg(long)]
    lobes: Option<PathBuf>,
    /// Subject table to append to.
    #[arg(long)]
    cohort: Option<PathBuf>,
    #[arg(long)]
    id: Option<String>,
    /// SLE-ILD or SLE-non-ILD.
    #[arg(long)]
    group: Option<String>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Subject table with raw volumes.
    #[arg(long)]
    cohort: Option<PathBuf>,
    /// Per-region summary statistics: region,n0,mean0,sd0,n1,mean1,sd1.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Per-variable counts: variable,n0,count0,n1,count1.
    #[arg(long)]
    categorical: Option<PathBuf>,
    /// Use Welch's unequal-variance t-test.
    #[arg(long)]
    welch: bool,
}

#[derive(Args, Debug)]
struct LossCheckArgs {
    /// Foreground probabilities.
    #[arg(long)]
    prob: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
}

fn set(slot: &mut Option<PathBuf>, v: Option<PathBuf>) {
    if v.is_some() {
        *slot = v;
    }
}

fn effective_config(cli: &mut Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    cfg.apply_seed();
    if let Some(o) = cli.out.take() {
        cfg.paths.out_dir = o;
    }
    let p = &mut cfg.paths;
    match &mut cli.command {
        Command::Phantom => {}
        Command::Segment(a) => {
            set(&mut p.intensity, a.input.take());
            set(&mut p.airway_gt, a.gt.take());
        }
        Command::Eval(a) => {
            set(&mut p.pred, a.pred.take());
            set(&mut p.airway_gt, a.gt.take());
            set(&mut p.centerlines, a.centerlines.take());
            if let Some(t) = a.tolerance_mm {
                cfg.eval.tolerance_mm = t;
            }
        }
        Command::Quant(a) => {
            set(&mut p.pred, a.airway.take());
            set(&mut p.lung_mask, a.lung.take());
            set(&mut p.region_labels, a.regions.take());
            set(&mut p.lobe_labels, a.lobes.take());
            set(&mut p.cohort, a.cohort.take());
            if let Some(id) = a.id.take() {
                cfg.quant.subject_id = id;
            }
            if let Some(g) = a.group.take() {
                cfg.quant.group = g.parse().map_err(|e| CliError::Config(format!("{e}")))?;
            }
        }
        Command::Compare(a) => {
            set(&mut p.cohort, a.cohort.take());
            set(&mut p.summary, a.summary.take());
            set(&mut p.categorical, a.categorical.take());
            if a.welch {
                cfg.compare.variant = airway_core::stats::TTestVariant::Welch;
            }
        }
        Command::LossCheck(a) => {
            set(&mut p.prob, a.prob.take());
            set(&mut p.airway_gt, a.gt.take());
        }
    }
    Ok(cfg)
}

fn run(mut cli: Cli) -> Result<(), CliError> {
    let cfg = effective_config(&mut cli)?;
    cfg.echo(&cfg.paths.out_dir)?;
    match cli.command {
        Command::Phantom => commands::phantom(&cfg),
        Command::Segment(_) => commands::segment(&cfg),
        Command::Eval(_) => commands::eval(&cfg),
        Command::Quant(_) => commands::quant(&cfg),
        Command::Compare(_) => commands::compare(&cfg),
        Command::LossCheck(_) => commands::loss_check(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::CONFIG } else { exit::OK });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.code())
        }
    }
}
