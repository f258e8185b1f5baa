//! `tipguard` command implementations. Each command reads its parameters
//! from an optional JSON `--config` document, applies flag overrides, and
//! embeds the resulting run config in every JSON artifact it writes.

pub mod commands;
pub mod config;
pub mod data;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tipguard_core::detector::Metric;
use tipguard_core::synth::GroundTruth;
use tipguard_core::timeseries::{make_windows, Normalizer, WindowSpec, WindowedDataset};

use config::{load_params, read_json, ShPreset, SpecFile, ThresholdSource};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "tipguard", version, about = "IMU forecasting and tip-over risk detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus (CSV + JSON sidecar per trial).
    Synth(SynthArgs),
    /// Train the forecasting autoencoder.
    Train(TrainArgs),
    /// Search layer widths with BOHB.
    Tune(TuneArgs),
    /// Fit thresholds and flag risk events.
    Detect(DetectArgs),
    /// Summarize a run directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// smoke | paper-analog
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON autoencoder spec with optional `step`.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Epochs.
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Window lengths, stride and dropout for every trial.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Maximum budget in epochs.
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long)]
    pub min_budget: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// JSON config space; defaults to one width per layer in [4, 64].
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, value_enum)]
    pub sh_preset: Option<ShPreset>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Number of Hyperband brackets.
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Defaults to `<out>/checkpoint.json`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_parser = ["mse", "mae"])]
    pub metric: Option<String>,
    #[arg(long)]
    pub quantile: Option<f64>,
    #[arg(long, value_enum)]
    pub thresholds: Option<ThresholdSource>,
    /// Window spec; lengths must match the checkpoint.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read_spec(path: &std::path::Path) -> Result<SpecFile, CliError> {
    read_json(path).map_err(|e| CliError::Usage(format!("--spec: {e}")))
}

/// Dispatches one parsed command; returns the summary printed on stdout.
pub fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    match cli.command {
        Command::Synth(a) => {
            let mut p: config::SynthParams = load_params(a.config.as_deref())?;
            if let Some(v) = a.out { p.out = v }
            if let Some(v) = a.seed { p.seed = v }
            if let Some(v) = a.preset { p.preset = v }
            commands::synth::run(&p)
        }
        Command::Train(a) => {
            let mut p: config::TrainParams = load_params(a.config.as_deref())?;
            if let Some(v) = a.data { p.data = v }
            if let Some(v) = a.out { p.out = v }
            if let Some(v) = a.seed { p.seed = v }
            if let Some(v) = a.budget { p.budget = v }
            if let Some(v) = a.spec { p.spec = read_spec(&v)? }
            Ok(serde_json::to_value(commands::train::run(&p)?)?)
        }
        Command::Tune(a) => {
            let mut p: config::TuneParams = load_params(a.config.as_deref())?;
            if let Some(v) = a.data { p.data = v }
            if let Some(v) = a.out { p.out = v }
            if let Some(v) = a.seed { p.seed = v }
            if let Some(v) = a.spec { p.spec = read_spec(&v)? }
            if let Some(v) = a.budget { p.budget = Some(v) }
            if let Some(v) = a.min_budget { p.min_budget = Some(v) }
            if let Some(v) = a.eta { p.eta = Some(v) }
            if let Some(v) = a.workers { p.workers = v }
            if let Some(v) = a.depth { p.depth = v }
            if let Some(v) = a.sh_preset { p.sh_preset = v }
            if let Some(v) = a.rho { p.rho = v }
            if let Some(v) = a.iterations { p.iterations = v }
            if let Some(v) = a.space {
                p.space = Some(read_json(&v).map_err(|e| CliError::Usage(format!("--space: {e}")))?);
            }
            commands::tune::run(&p)
        }
        Command::Detect(a) => {
            let mut p: config::DetectParams = load_params(a.config.as_deref())?;
            if let Some(v) = a.data { p.data = v }
            if let Some(v) = a.out { p.out = v }
            if let Some(v) = a.checkpoint { p.checkpoint = Some(v) }
            if let Some(v) = a.metric { p.metric = v.parse::<Metric>().map_err(CliError::Usage)? }
            if let Some(v) = a.quantile { p.quantile = v }
            if let Some(v) = a.thresholds { p.thresholds = v }
            if let Some(v) = a.spec { p.spec = Some(read_spec(&v)?) }
            commands::detect::run(&p)
        }
        Command::Report(a) => {
            let mut p: config::ReportParams = load_params(a.config.as_deref())?;
            if let Some(v) = a.out { p.out = v }
            commands::report::run(&p)
        }
    }
}

/// Windows of held-out trials: all of them, and those whose span stays at
/// least `output_len` samples clear of every labelled interval.
pub fn heldout_sets(trials: &[&data::Trial], norm: &Normalizer, window: WindowSpec) -> (WindowedDataset, WindowedDataset) {
    let mut full = WindowedDataset::empty(window.input_len, window.output_len);
    let mut clean = WindowedDataset::empty(window.input_len, window.output_len);
    for t in trials {
        let w = make_windows(&norm.apply(&t.series), window);
        let empty = GroundTruth::default();
        let truth = t.truth.as_ref().unwrap_or(&empty);
        let keep: Vec<usize> = (0..w.len())
            .filter(|&k| {
                let start = w.window_starts[k];
                let end = start + window.span() - 1;
                !truth
                    .intervals
                    .iter()
                    .any(|iv| start <= iv.end + window.output_len && end + window.output_len >= iv.start)
            })
            .collect();
        full.extend(&w);
        clean.extend(&w.select(&keep));
    }
    (full, clean)
}
