use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AutoencoderModel, DropoutPlan, ModelError};
use crate::nn::{clip_global_norm, mse_loss, AdamConfig, AdamState};
use crate::seeding::{mix, mix3};
use crate::timeseries::WindowedDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Every `validation_stride`-th window (index ≡ stride-1) is held out.
    pub validation_stride: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub clip_norm: f64,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        Self {
            epochs,
            batch_size: 16,
            validation_stride: 10,
            seed,
            adam: AdamConfig::default(),
            clip_norm: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Training-set MSE of the untrained model.
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub wall_time_s: f64,
    pub train_loss_curve: Vec<f64>,
    pub val_loss_curve: Vec<f64>,
    pub train_windows: usize,
    pub val_windows: usize,
    pub skipped_steps: usize,
}

/// Mean of per-window MSE over a dataset, dropout off.
pub fn dataset_loss(model: &AutoencoderModel, ds: &WindowedDataset) -> Result<f64, ModelError> {
    if ds.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut total = 0.0;
    for k in 0..ds.len() {
        let pred = model.forecast(ds.input(k))?;
        total += mse_loss(&pred, ds.target(k))?.0;
    }
    Ok(total / ds.len() as f64)
}

/// Mini-batch Adam on the MSE between forecasts and targets.
pub fn train(
    model: &mut AutoencoderModel,
    dataset: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport, ModelError> {
    if cfg.epochs == 0 {
        return Err(ModelError::ZeroBudget);
    }
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    model.check_dataset(dataset)?;
    let started = Instant::now();

    let stride = cfg.validation_stride.max(2);
    let (val_idx, train_idx): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|k| k % stride == stride - 1);
    let train_ds = dataset.select(&train_idx);
    let val_ds = if val_idx.is_empty() {
        train_ds.clone()
    } else {
        dataset.select(&val_idx)
    };

    let initial_train_loss = dataset_loss(model, &train_ds)?;
    let shapes: Vec<usize> = model.net.buffers().iter().map(|b| b.len()).collect();
    let mut adam = AdamState::new(cfg.adam, &shapes);
    let rate = model.spec.dropout_rate;
    let batch_size = cfg.batch_size.max(1);

    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut train_curve = Vec::with_capacity(cfg.epochs);
    let mut val_curve = Vec::with_capacity(cfg.epochs);
    let mut skipped = 0;

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, epoch as u64));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(batch_size).enumerate() {
            let mut grads = model.net.zero_grads();
            let mut batch_loss = 0.0;
            for (j, &k) in batch.iter().enumerate() {
                let plan = (rate > 0.0).then(|| DropoutPlan {
                    rate,
                    seed: mix3(cfg.seed, epoch as u64, (b * batch_size + j) as u64),
                });
                let (pred, cache) = model.net.forward(train_ds.input(k), plan)?;
                let (loss, d_out) = mse_loss(&pred, train_ds.target(k))?;
                batch_loss += loss;
                model.net.backward(&cache, &d_out, &mut grads)?;
            }
            if !batch_loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b });
            }
            epoch_loss += batch_loss;
            grads.scale(1.0 / batch.len() as f64);
            clip_global_norm(&mut grads.buffers_mut(), cfg.clip_norm);
            let g = grads.buffers();
            match adam.step(&mut model.net.buffers_mut(), &g) {
                Ok(()) => {}
                Err(crate::nn::NnError::NonFiniteGradient) => {
                    log::warn!("epoch {epoch} batch {b}: non-finite gradient, step skipped");
                    skipped += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
        let train_loss = epoch_loss / train_ds.len() as f64;
        let val_loss = dataset_loss(model, &val_ds)?;
        if !val_loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch, batch: 0 });
        }
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        train_curve.push(train_loss);
        val_curve.push(val_loss);
    }

    Ok(TrainReport {
        epochs_run: cfg.epochs,
        initial_train_loss,
        final_train_loss: *train_curve.last().expect("epochs >= 1"),
        final_val_loss: *val_curve.last().expect("epochs >= 1"),
        wall_time_s: started.elapsed().as_secs_f64(),
        train_loss_curve: train_curve,
        val_loss_curve: val_curve,
        train_windows: train_ds.len(),
        val_windows: val_idx.len(),
        skipped_steps: skipped,
    })
}
