//! Small double-precision network numerics with hand-derived gradients.
//!
//! Tensors are flat row-major `Vec<f64>` buffers; shapes travel alongside
//! them. Every layer exposes a pure forward pass that returns a cache, and
//! a backward pass that consumes it.

mod adam;
mod dense;
mod dropout;
mod init;
mod loss;
mod lstm;

pub use adam::{AdamConfig, AdamState};
pub use dense::{Dense, DenseGrads};
pub use dropout::{dropout_apply, Dropout};
pub use init::{glorot_uniform, orthogonal};
pub use loss::{mae_loss, mse_loss};
pub use lstm::{LstmBackward, LstmCache, LstmForward, LstmGrads, LstmLayer};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("non-finite gradient; optimizer step skipped")]
    NonFiniteGradient,
    #[error("dropout rate {0} outside [0, 1)")]
    DropoutRate(f64),
}

pub(crate) fn shape_err(what: impl Into<String>) -> NnError {
    NnError::Shape(what.into())
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// tanh through a single exponential; faster than `f64::tanh` here and
/// accurate to a few ulps in absolute terms.
#[inline]
pub(crate) fn fast_tanh(x: f64) -> f64 {
    2.0 * sigmoid(2.0 * x) - 1.0
}

/// Euclidean norm over a list of buffers.
pub fn global_norm(buffers: &[&[f64]]) -> f64 {
    buffers
        .iter()
        .flat_map(|b| b.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// Rescales all buffers jointly so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(buffers: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = buffers
        .iter()
        .flat_map(|b| b.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        buffers.iter_mut().for_each(|b| b.iter_mut().for_each(|g| *g *= s));
    }
    norm
}
