//! The forecasting autoencoder: specification, model, training and scoring.

mod checkpoint;
mod network;
mod train;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT};
pub use network::{DropoutPlan, Seq2Seq, Seq2SeqCache, Seq2SeqGrads};
pub use train::{train, TrainConfig, TrainReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::NnError;
use crate::timeseries::{Normalizer, WindowedDataset, CHANNELS};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training budget must be at least one epoch")]
    ZeroBudget,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("input has {found} timesteps, model expects {expected}")]
    InputLength { expected: usize, found: usize },
    #[error("dataset windows ({input}→{output}) do not match model ({want_in}→{want_out})")]
    WindowMismatch {
        input: usize,
        output: usize,
        want_in: usize,
        want_out: usize,
    },
    #[error("r2 needs at least two windows of equal shape")]
    R2Shape,
    #[error("targets have zero variance")]
    ZeroVariance,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    pub input_len: usize,
    pub output_len: usize,
    pub encoder_layer_sizes: Vec<usize>,
    #[serde(default)]
    pub dropout_rate: f64,
    #[serde(default = "default_channels")]
    pub channels: usize,
}

fn default_channels() -> usize {
    CHANNELS
}

pub const MIN_NODES: usize = 4;
pub const MAX_NODES: usize = 64;

impl AutoencoderSpec {
    pub fn new(input_len: usize, output_len: usize, sizes: Vec<usize>, dropout_rate: f64) -> Self {
        Self {
            input_len,
            output_len,
            encoder_layer_sizes: sizes,
            dropout_rate,
            channels: CHANNELS,
        }
    }

    /// 25-step input, 5-step output, one 19-unit layer, no dropout.
    pub fn short_horizon_default() -> Self {
        Self::new(25, 5, vec![19], 0.0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidSpec(m));
        if !(1..=3).contains(&self.encoder_layer_sizes.len()) {
            return bad(format!("depth {} not in 1..=3", self.encoder_layer_sizes.len()));
        }
        if let Some(h) = self
            .encoder_layer_sizes
            .iter()
            .find(|h| !(MIN_NODES..=MAX_NODES).contains(*h))
        {
            return bad(format!("layer size {h} not in [{MIN_NODES}, {MAX_NODES}]"));
        }
        if self.input_len == 0 || self.output_len == 0 {
            return bad("sequence lengths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.channels != CHANNELS {
            return bad(format!("channels must be {CHANNELS}"));
        }
        Ok(())
    }

    /// Closed-form trainable parameter count.
    pub fn param_count(&self) -> usize {
        let lstm = |d: usize, h: usize| 4 * h * (d + h) + 4 * h;
        let sizes = &self.encoder_layer_sizes;
        let mut total = 0;
        let mut d = self.channels;
        for &h in sizes {
            total += lstm(d, h);
            d = h;
        }
        for &h in sizes.iter().rev() {
            total += lstm(d, h);
            d = h;
        }
        total + d * self.channels + self.channels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub spec: AutoencoderSpec,
    pub net: Seq2Seq,
    pub normalizer: Option<Normalizer>,
    pub seed: u64,
}

pub fn build(spec: &AutoencoderSpec, seed: u64) -> Result<AutoencoderModel, ModelError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Seq2Seq::init(
        &mut rng,
        spec.channels,
        spec.input_len,
        spec.output_len,
        &spec.encoder_layer_sizes,
    );
    Ok(AutoencoderModel {
        spec: spec.clone(),
        net,
        normalizer: None,
        seed,
    })
}

impl AutoencoderModel {
    /// Deterministic forecast of an L_in×6 normalized window.
    pub fn forecast(&self, input: &[f64]) -> Result<Vec<f64>, ModelError> {
        let width = self.spec.channels;
        if input.len() != self.spec.input_len * width {
            return Err(ModelError::InputLength {
                expected: self.spec.input_len,
                found: input.len() / width,
            });
        }
        Ok(self.net.predict(input)?)
    }

    pub fn check_dataset(&self, ds: &WindowedDataset) -> Result<(), ModelError> {
        if ds.input_len != self.spec.input_len || ds.output_len != self.spec.output_len {
            return Err(ModelError::WindowMismatch {
                input: ds.input_len,
                output: ds.output_len,
                want_in: self.spec.input_len,
                want_out: self.spec.output_len,
            });
        }
        Ok(())
    }

    /// Forecasts every window; N×L_out×6 row-major.
    pub fn predict_dataset(&self, ds: &WindowedDataset) -> Result<Vec<f64>, ModelError> {
        self.check_dataset(ds)?;
        let mut out = Vec::with_capacity(ds.targets.len());
        for k in 0..ds.len() {
            out.extend(self.forecast(ds.input(k))?);
        }
        Ok(out)
    }

    pub fn evaluate_r2(&self, ds: &WindowedDataset) -> Result<f64, ModelError> {
        let preds = self.predict_dataset(ds)?;
        r2_score(&preds, &ds.targets, self.spec.output_len)
    }
}

/// Coefficient of determination pooled over windows, steps and channels.
/// The total sum of squares is taken around each channel's mean, which
/// weights channels by their variance.
pub fn r2_score(predictions: &[f64], targets: &[f64], output_len: usize) -> Result<f64, ModelError> {
    let per_window = output_len * CHANNELS;
    if predictions.len() != targets.len()
        || per_window == 0
        || !targets.len().is_multiple_of(per_window)
        || targets.len() / per_window < 2
    {
        return Err(ModelError::R2Shape);
    }
    let rows = targets.len() / CHANNELS;
    let mut mean = [0.0; CHANNELS];
    for row in targets.chunks_exact(CHANNELS) {
        for c in 0..CHANNELS {
            mean[c] += row[c];
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (p, y) in predictions
        .chunks_exact(CHANNELS)
        .zip(targets.chunks_exact(CHANNELS))
    {
        for c in 0..CHANNELS {
            ss_res += (y[c] - p[c]).powi(2);
            ss_tot += (y[c] - mean[c]).powi(2);
        }
    }
    if ss_tot <= 0.0 {
        return Err(ModelError::ZeroVariance);
    }
    Ok(1.0 - ss_res / ss_tot)
}
