use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tipguard_core::autoencoder::AutoencoderSpec;
use tipguard_core::bohb::ConfigSpace;
use tipguard_core::detector::{Metric, DEFAULT_QUANTILE};
use tipguard_core::synth::SynthConfig;

use crate::CliError;

pub const RUN_SCHEMA: &str = "tipguard-run/1";

/// Parameter document of one invocation, embedded in its JSON outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema: String,
    #[serde(flatten)]
    pub params: Params,
}

impl RunConfig {
    pub fn new(params: Params) -> Self {
        Self {
            schema: RUN_SCHEMA.to_string(),
            params,
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Params {
    Synth(SynthParams),
    Train(TrainParams),
    Tune(TuneParams),
    Detect(DetectParams),
    Report(ReportParams),
}

/// Autoencoder spec plus the window stride, as read by `--spec`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecFile {
    #[serde(flatten)]
    pub spec: AutoencoderSpec,
    #[serde(default = "default_step")]
    pub step: usize,
}

fn default_step() -> usize {
    10
}

impl Default for SpecFile {
    fn default() -> Self {
        Self {
            spec: AutoencoderSpec::short_horizon_default(),
            step: default_step(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub out: PathBuf,
    pub preset: String,
    pub seed: u64,
    /// Replaces the preset when present.
    pub trials: Option<Vec<SynthConfig>>,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            out: PathBuf::new(),
            preset: "smoke".into(),
            seed: 0,
            trials: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub data: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub spec: SpecFile,
    /// Epochs.
    pub budget: usize,
    pub train_frac: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            out: PathBuf::new(),
            seed: 0,
            spec: SpecFile::default(),
            budget: 100,
            train_frac: 0.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ShPreset {
    /// 20→100 epochs, η = √5.
    Long,
    /// 1→27 epochs, η = 3.
    Hyperband,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneParams {
    pub data: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    /// Lengths, stride and dropout; layer sizes come from the search.
    pub spec: SpecFile,
    pub depth: usize,
    pub space: Option<ConfigSpace>,
    pub sh_preset: ShPreset,
    pub budget: Option<f64>,
    pub min_budget: Option<f64>,
    pub eta: Option<f64>,
    pub iterations: usize,
    pub rho: f64,
    pub q: f64,
    pub n_samples: usize,
    pub bandwidth_factor: f64,
    pub workers: usize,
    pub train_frac: f64,
}

impl Default for TuneParams {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            out: PathBuf::new(),
            seed: 0,
            spec: SpecFile::default(),
            depth: 1,
            space: None,
            sh_preset: ShPreset::Long,
            budget: None,
            min_budget: None,
            eta: None,
            iterations: 3,
            rho: 1.0 / 3.0,
            q: 0.15,
            n_samples: 64,
            bandwidth_factor: 3.0,
            workers: 1,
            train_frac: 0.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdSource {
    /// Quantile of the training-trial error distribution.
    Fit,
    /// Fixed per-axis preset values.
    Table4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectParams {
    pub data: PathBuf,
    pub out: PathBuf,
    /// Defaults to `<out>/checkpoint.json`.
    pub checkpoint: Option<PathBuf>,
    pub metric: Metric,
    pub quantile: f64,
    pub thresholds: ThresholdSource,
    /// Must agree with the checkpoint's lengths; may change the stride.
    pub spec: Option<SpecFile>,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            out: PathBuf::new(),
            checkpoint: None,
            metric: Metric::Mse,
            quantile: DEFAULT_QUANTILE,
            thresholds: ThresholdSource::Fit,
            spec: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportParams {
    pub out: PathBuf,
}

/// Reads a JSON document, mapping failures to data errors that name the file.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Params from an optional `--config` file, defaults otherwise.
pub fn load_params<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            serde_json::from_slice(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
        }
    }
}

pub fn require_path(p: &Path, flag: &str) -> Result<(), CliError> {
    if p.as_os_str().is_empty() {
        Err(CliError::Usage(format!("{flag} is required")))
    } else {
        Ok(())
    }
}
