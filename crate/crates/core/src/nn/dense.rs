use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{glorot_uniform, shape_err, NnError};

/// Affine map applied independently at every timestep. `weight` is O×H.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub input_size: usize,
    pub output_size: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseGrads {
    pub fn zeros_like(layer: &Dense) -> Self {
        Self {
            weight: vec![0.0; layer.weight.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }

    pub fn buffers(&self) -> [&[f64]; 2] {
        [&self.weight, &self.bias]
    }

    pub fn buffers_mut(&mut self) -> [&mut [f64]; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

impl Dense {
    pub fn zeros(input_size: usize, output_size: usize) -> Self {
        Self {
            input_size,
            output_size,
            weight: vec![0.0; input_size * output_size],
            bias: vec![0.0; output_size],
        }
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, input_size: usize, output_size: usize) -> Self {
        Self {
            input_size,
            output_size,
            weight: glorot_uniform(rng, input_size, output_size),
            bias: vec![0.0; output_size],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Maps an L×H sequence to L×O.
    pub fn forward(&self, seq: &[f64]) -> Result<Vec<f64>, NnError> {
        let (h, o) = (self.input_size, self.output_size);
        if h == 0 || !seq.len().is_multiple_of(h) {
            return Err(shape_err(format!("dense input of {} values, H={h}", seq.len())));
        }
        let len = seq.len() / h;
        let mut out = Vec::with_capacity(len * o);
        for x in seq.chunks_exact(h) {
            for r in 0..o {
                let wr = &self.weight[r * h..(r + 1) * h];
                out.push(self.bias[r] + wr.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients and returns the L×H input gradient.
    pub fn backward_into(
        &self,
        seq: &[f64],
        d_out: &[f64],
        grads: &mut DenseGrads,
    ) -> Result<Vec<f64>, NnError> {
        let (h, o) = (self.input_size, self.output_size);
        if !seq.len().is_multiple_of(h) || d_out.len() != seq.len() / h * o {
            return Err(shape_err("dense backward shapes"));
        }
        let mut d_in = vec![0.0; seq.len()];
        for ((x, dy), dx) in seq
            .chunks_exact(h)
            .zip(d_out.chunks_exact(o))
            .zip(d_in.chunks_exact_mut(h))
        {
            for r in 0..o {
                let g = dy[r];
                grads.bias[r] += g;
                let wr = &self.weight[r * h..(r + 1) * h];
                let gw = &mut grads.weight[r * h..(r + 1) * h];
                for k in 0..h {
                    gw[k] += g * x[k];
                    dx[k] += g * wr[k];
                }
            }
        }
        Ok(d_in)
    }

    pub fn buffers(&self) -> [&[f64]; 2] {
        [&self.weight, &self.bias]
    }

    pub fn buffers_mut(&mut self) -> [&mut [f64]; 2] {
        [&mut self.weight, &mut self.bias]
    }
}
