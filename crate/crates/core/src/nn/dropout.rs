use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NnError;

/// Result of an inverted-dropout pass. `mask` holds the per-unit multiplier
/// (0 or 1/(1-rate)) and is `None` when the pass was the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Dropout {
    pub values: Vec<f64>,
    pub mask: Option<Vec<f64>>,
}

impl Dropout {
    /// Gradient of the pass with respect to its input.
    pub fn backward(&self, upstream: &[f64]) -> Vec<f64> {
        match &self.mask {
            Some(mask) => upstream.iter().zip(mask).map(|(g, m)| g * m).collect(),
            None => upstream.to_vec(),
        }
    }
}

pub fn dropout_apply(
    activations: &[f64],
    rate: f64,
    seed: u64,
    training: bool,
) -> Result<Dropout, NnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::DropoutRate(rate));
    }
    if !training || rate == 0.0 {
        return Ok(Dropout {
            values: activations.to_vec(),
            mask: None,
        });
    }
    let keep = 1.0 / (1.0 - rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask: Vec<f64> = activations
        .iter()
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let values = activations.iter().zip(&mask).map(|(a, m)| a * m).collect();
    Ok(Dropout {
        values,
        mask: Some(mask),
    })
}
