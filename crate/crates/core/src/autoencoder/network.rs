//! Encoder / repeat-vector / decoder / time-distributed head composition.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{dropout_apply, Dense, DenseGrads, Dropout, LstmCache, LstmGrads, LstmLayer, NnError};
use crate::seeding::mix;

/// Seq2seq network with no size restrictions. The encoder's final hidden
/// state is repeated `output_len` times as the decoder input; decoder
/// states start at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2Seq {
    pub input_len: usize,
    pub output_len: usize,
    pub channels: usize,
    pub encoder: Vec<LstmLayer>,
    pub decoder: Vec<LstmLayer>,
    pub head: Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqGrads {
    pub encoder: Vec<LstmGrads>,
    pub decoder: Vec<LstmGrads>,
    pub head: DenseGrads,
}

struct LayerTrace {
    cache: LstmCache,
    dropout: Dropout,
}

/// Forward activations kept for backpropagation.
pub struct Seq2SeqCache {
    encoder: Vec<LayerTrace>,
    decoder: Vec<LayerTrace>,
    head_input: Vec<f64>,
}

/// Dropout setting for one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct DropoutPlan {
    pub rate: f64,
    pub seed: u64,
}

impl Seq2Seq {
    /// Decoder widths mirror the encoder: encoder [a, b, c] gives decoder [c, b, a].
    pub fn init<R: Rng + ?Sized>(
        rng: &mut R,
        channels: usize,
        input_len: usize,
        output_len: usize,
        sizes: &[usize],
    ) -> Self {
        let mut encoder = Vec::with_capacity(sizes.len());
        let mut d = channels;
        for &h in sizes {
            encoder.push(LstmLayer::init(rng, d, h));
            d = h;
        }
        let mut decoder = Vec::with_capacity(sizes.len());
        for &h in sizes.iter().rev() {
            decoder.push(LstmLayer::init(rng, d, h));
            d = h;
        }
        let head = Dense::init(rng, d, channels);
        Self {
            input_len,
            output_len,
            channels,
            encoder,
            decoder,
            head,
        }
    }

    pub fn param_count(&self) -> usize {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .map(LstmLayer::param_count)
            .sum::<usize>()
            + self.head.param_count()
    }

    pub fn buffers(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in self.encoder.iter().chain(&self.decoder) {
            out.extend(layer.buffers());
        }
        out.extend(self.head.buffers());
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.extend(layer.buffers_mut());
        }
        out.extend(self.head.buffers_mut());
        out
    }

    pub fn zero_grads(&self) -> Seq2SeqGrads {
        Seq2SeqGrads {
            encoder: self.encoder.iter().map(LstmGrads::zeros_like).collect(),
            decoder: self.decoder.iter().map(LstmGrads::zeros_like).collect(),
            head: DenseGrads::zeros_like(&self.head),
        }
    }

    /// Inference forward pass (no dropout, no cache).
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.forward(input, None).map(|(y, _)| y)
    }

    /// Forward pass over an L_in×C input, returning the L_out×C forecast.
    pub fn forward(
        &self,
        input: &[f64],
        dropout: Option<DropoutPlan>,
    ) -> Result<(Vec<f64>, Seq2SeqCache), NnError> {
        if input.len() != self.input_len * self.channels {
            return Err(NnError::Shape(format!(
                "input has {} values, expected {}×{}",
                input.len(),
                self.input_len,
                self.channels
            )));
        }
        let (rate, base_seed, training) = match dropout {
            Some(p) => (p.rate, p.seed, true),
            None => (0.0, 0, false),
        };

        let mut seq = input.to_vec();
        let mut enc_traces = Vec::with_capacity(self.encoder.len());
        for (i, layer) in self.encoder.iter().enumerate() {
            let zeros = vec![0.0; layer.hidden_size];
            let out = layer.forward(&seq, &zeros, &zeros)?;
            let dropped = dropout_apply(&out.hidden, rate, mix(base_seed, i as u64), training)?;
            seq = dropped.values.clone();
            enc_traces.push(LayerTrace {
                cache: out.cache,
                dropout: dropped,
            });
        }
        let latent_size = self.encoder.last().map_or(self.channels, |l| l.hidden_size);
        let latent = seq[seq.len() - latent_size..].to_vec();

        let mut seq: Vec<f64> = latent
            .iter()
            .copied()
            .cycle()
            .take(latent_size * self.output_len)
            .collect();
        let mut dec_traces = Vec::with_capacity(self.decoder.len());
        for (i, layer) in self.decoder.iter().enumerate() {
            let zeros = vec![0.0; layer.hidden_size];
            let out = layer.forward(&seq, &zeros, &zeros)?;
            let seed = mix(base_seed, (self.encoder.len() + i) as u64);
            let dropped = dropout_apply(&out.hidden, rate, seed, training)?;
            seq = dropped.values.clone();
            dec_traces.push(LayerTrace {
                cache: out.cache,
                dropout: dropped,
            });
        }
        let output = self.head.forward(&seq)?;
        Ok((
            output,
            Seq2SeqCache {
                encoder: enc_traces,
                decoder: dec_traces,
                head_input: seq,
            },
        ))
    }

    /// Accumulates parameter gradients for one sample into `grads` and
    /// returns the gradient with respect to the input sequence.
    pub fn backward(
        &self,
        cache: &Seq2SeqCache,
        d_output: &[f64],
        grads: &mut Seq2SeqGrads,
    ) -> Result<Vec<f64>, NnError> {
        let mut d_seq = self
            .head
            .backward_into(&cache.head_input, d_output, &mut grads.head)?;

        for (i, layer) in self.decoder.iter().enumerate().rev() {
            let trace = &cache.decoder[i];
            let d_hidden = trace.dropout.backward(&d_seq);
            let (d_in, _, _) =
                layer.backward_into(&trace.cache, &d_hidden, None, None, &mut grads.decoder[i])?;
            d_seq = d_in;
        }

        // the decoder input is the latent repeated at every step
        let latent_size = self.encoder.last().map_or(self.channels, |l| l.hidden_size);
        let mut d_latent = vec![0.0; latent_size];
        for step in d_seq.chunks_exact(latent_size) {
            d_latent.iter_mut().zip(step).for_each(|(a, b)| *a += b);
        }

        let mut d_seq = vec![0.0; self.input_len * latent_size];
        let off = d_seq.len() - latent_size;
        d_seq[off..].copy_from_slice(&d_latent);
        for (i, layer) in self.encoder.iter().enumerate().rev() {
            let trace = &cache.encoder[i];
            let d_hidden = trace.dropout.backward(&d_seq);
            let (d_in, _, _) =
                layer.backward_into(&trace.cache, &d_hidden, None, None, &mut grads.encoder[i])?;
            d_seq = d_in;
        }
        Ok(d_seq)
    }
}

impl Seq2SeqGrads {
    pub fn buffers(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for g in self.encoder.iter().chain(&self.decoder) {
            out.extend(g.buffers());
        }
        out.extend(self.head.buffers());
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for g in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.extend(g.buffers_mut());
        }
        out.extend(self.head.buffers_mut());
        out
    }

    pub fn scale(&mut self, factor: f64) {
        for b in self.buffers_mut() {
            b.iter_mut().for_each(|g| *g *= factor);
        }
    }
}
