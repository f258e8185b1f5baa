use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fast_tanh, glorot_uniform, orthogonal, shape_err, sigmoid, NnError};

/// One LSTM layer. Gate blocks are stacked in the order
/// (input, forget, cell, output); `w` is 4H×D, `u` is 4H×H, `b` is 4H.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
}

impl LstmGrads {
    pub fn zeros_like(layer: &LstmLayer) -> Self {
        Self {
            w: vec![0.0; layer.w.len()],
            u: vec![0.0; layer.u.len()],
            b: vec![0.0; layer.b.len()],
        }
    }

    pub fn add_assign(&mut self, other: &LstmGrads) {
        for (a, b) in [
            (&mut self.w, &other.w),
            (&mut self.u, &other.u),
            (&mut self.b, &other.b),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

/// Everything the backward pass needs from a forward call.
#[derive(Debug, Clone)]
pub struct LstmCache {
    len: usize,
    input_size: usize,
    hidden_size: usize,
    inputs: Vec<f64>,
    /// Post-activation gates, L×4H.
    gates: Vec<f64>,
    /// (L+1)×H, row 0 is the initial state.
    cells: Vec<f64>,
    hiddens: Vec<f64>,
    tanh_cells: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmForward {
    /// L×H hidden sequence.
    pub hidden: Vec<f64>,
    pub h_last: Vec<f64>,
    pub c_last: Vec<f64>,
    pub cache: LstmCache,
}

#[derive(Debug, Clone)]
pub struct LstmBackward {
    pub grads: LstmGrads,
    pub d_input: Vec<f64>,
    pub d_h0: Vec<f64>,
    pub d_c0: Vec<f64>,
}

impl LstmLayer {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            input_size,
            hidden_size,
            w: vec![0.0; 4 * hidden_size * input_size],
            u: vec![0.0; 4 * hidden_size * hidden_size],
            b: vec![0.0; 4 * hidden_size],
        }
    }

    /// Glorot-uniform input weights, orthogonal recurrent weights,
    /// forget-gate bias 1 and all other biases 0.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, input_size: usize, hidden_size: usize) -> Self {
        let h = hidden_size;
        let mut b = vec![0.0; 4 * h];
        b[h..2 * h].iter_mut().for_each(|x| *x = 1.0);
        Self {
            input_size,
            hidden_size,
            w: glorot_uniform(rng, input_size, 4 * h),
            u: orthogonal(rng, 4 * h, h),
            b,
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.u.len() + self.b.len()
    }

    pub fn check_shapes(&self) -> Result<(), NnError> {
        let (d, h) = (self.input_size, self.hidden_size);
        if self.w.len() != 4 * h * d || self.u.len() != 4 * h * h || self.b.len() != 4 * h {
            return Err(shape_err(format!(
                "lstm buffers w={} u={} b={} inconsistent with D={d} H={h}",
                self.w.len(),
                self.u.len(),
                self.b.len()
            )));
        }
        Ok(())
    }

    /// Runs the layer over an L×D sequence from state `(h0, c0)`.
    pub fn forward(&self, seq: &[f64], h0: &[f64], c0: &[f64]) -> Result<LstmForward, NnError> {
        let (d, h) = (self.input_size, self.hidden_size);
        if d == 0 || !seq.len().is_multiple_of(d) {
            return Err(shape_err(format!(
                "sequence of {} values is not a multiple of D={d}",
                seq.len()
            )));
        }
        if h0.len() != h || c0.len() != h {
            return Err(shape_err(format!("initial state must have H={h} entries")));
        }
        if seq.iter().chain(h0).chain(c0).any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteInput);
        }
        let len = seq.len() / d;
        let g4 = 4 * h;
        let mut gates = vec![0.0; len * g4];
        let mut cells = vec![0.0; (len + 1) * h];
        let mut hiddens = vec![0.0; (len + 1) * h];
        let mut tanh_cells = vec![0.0; len * h];
        cells[..h].copy_from_slice(c0);
        hiddens[..h].copy_from_slice(h0);

        let mut z = vec![0.0; g4];
        for t in 0..len {
            let x = &seq[t * d..(t + 1) * d];
            let h_prev = &hiddens[t * h..(t + 1) * h];
            for (r, zr) in z.iter_mut().enumerate() {
                let wr = &self.w[r * d..(r + 1) * d];
                let ur = &self.u[r * h..(r + 1) * h];
                *zr = self.b[r] + dot(wr, x) + dot(ur, h_prev);
            }
            let gt = &mut gates[t * g4..(t + 1) * g4];
            for j in 0..h {
                gt[j] = sigmoid(z[j]);
                gt[h + j] = sigmoid(z[h + j]);
                gt[2 * h + j] = fast_tanh(z[2 * h + j]);
                gt[3 * h + j] = sigmoid(z[3 * h + j]);
            }
            let (c_head, c_tail) = cells.split_at_mut((t + 1) * h);
            let c_prev = &c_head[t * h..];
            let c_new = &mut c_tail[..h];
            let h_new = &mut hiddens[(t + 1) * h..(t + 2) * h];
            let tc = &mut tanh_cells[t * h..(t + 1) * h];
            for j in 0..h {
                let c = gt[h + j] * c_prev[j] + gt[j] * gt[2 * h + j];
                c_new[j] = c;
                tc[j] = fast_tanh(c);
                h_new[j] = gt[3 * h + j] * tc[j];
            }
        }

        let hidden = hiddens[h..].to_vec();
        let h_last = hiddens[len * h..].to_vec();
        let c_last = cells[len * h..].to_vec();
        Ok(LstmForward {
            hidden,
            h_last,
            c_last,
            cache: LstmCache {
                len,
                input_size: d,
                hidden_size: h,
                inputs: seq.to_vec(),
                gates,
                cells,
                hiddens,
                tanh_cells,
            },
        })
    }

    /// Backpropagation through time. `d_hidden` is the L×H gradient on the
    /// output sequence; `d_h_last`/`d_c_last` are extra gradients on the
    /// final state (zeros when `None`).
    pub fn backward(
        &self,
        cache: &LstmCache,
        d_hidden: &[f64],
        d_h_last: Option<&[f64]>,
        d_c_last: Option<&[f64]>,
    ) -> Result<LstmBackward, NnError> {
        let mut grads = LstmGrads::zeros_like(self);
        let (d_input, d_h0, d_c0) =
            self.backward_into(cache, d_hidden, d_h_last, d_c_last, &mut grads)?;
        Ok(LstmBackward {
            grads,
            d_input,
            d_h0,
            d_c0,
        })
    }

    /// As [`backward`](Self::backward) but accumulates parameter gradients
    /// into `grads`. Returns (d_input, d_h0, d_c0).
    #[allow(clippy::type_complexity)]
    pub fn backward_into(
        &self,
        cache: &LstmCache,
        d_hidden: &[f64],
        d_h_last: Option<&[f64]>,
        d_c_last: Option<&[f64]>,
        grads: &mut LstmGrads,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), NnError> {
        let (d, h, len) = (self.input_size, self.hidden_size, cache.len);
        if cache.input_size != d || cache.hidden_size != h {
            return Err(shape_err("cache was produced by a layer of another shape"));
        }
        if d_hidden.len() != len * h {
            return Err(shape_err(format!(
                "upstream gradient has {} values, expected {}",
                d_hidden.len(),
                len * h
            )));
        }
        if grads.w.len() != self.w.len() || grads.u.len() != self.u.len() || grads.b.len() != self.b.len() {
            return Err(shape_err("gradient buffers do not match layer"));
        }
        let g4 = 4 * h;
        let mut dh_next = match d_h_last {
            Some(v) if v.len() == h => v.to_vec(),
            Some(_) => return Err(shape_err("d_h_last length")),
            None => vec![0.0; h],
        };
        let mut dc_next = match d_c_last {
            Some(v) if v.len() == h => v.to_vec(),
            Some(_) => return Err(shape_err("d_c_last length")),
            None => vec![0.0; h],
        };
        let mut d_input = vec![0.0; len * d];
        let mut dz = vec![0.0; g4];

        for t in (0..len).rev() {
            let gt = &cache.gates[t * g4..(t + 1) * g4];
            let c_prev = &cache.cells[t * h..(t + 1) * h];
            let tc = &cache.tanh_cells[t * h..(t + 1) * h];
            for j in 0..h {
                let (i, f, g, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                let dh = d_hidden[t * h + j] + dh_next[j];
                let d_o = dh * tc[j];
                let dc = dc_next[j] + dh * o * (1.0 - tc[j] * tc[j]);
                dz[j] = dc * g * i * (1.0 - i);
                dz[h + j] = dc * c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dc * i * (1.0 - g * g);
                dz[3 * h + j] = d_o * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            let x = &cache.inputs[t * d..(t + 1) * d];
            let h_prev = &cache.hiddens[t * h..(t + 1) * h];
            let dx = &mut d_input[t * d..(t + 1) * d];
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for (r, &g) in dz.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grads.b[r] += g;
                axpy(g, x, &mut grads.w[r * d..(r + 1) * d]);
                axpy(g, &self.w[r * d..(r + 1) * d], dx);
                axpy(g, h_prev, &mut grads.u[r * h..(r + 1) * h]);
                axpy(g, &self.u[r * h..(r + 1) * h], &mut dh_next);
            }
        }
        Ok((d_input, dh_next, dc_next))
    }

    pub fn buffers(&self) -> [&[f64]; 3] {
        [&self.w, &self.u, &self.b]
    }

    pub fn buffers_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.w, &mut self.u, &mut self.b]
    }
}

/// Dot product with four independent accumulators.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// y += alpha * x
#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl LstmGrads {
    pub fn buffers(&self) -> [&[f64]; 3] {
        [&self.w, &self.u, &self.b]
    }

    pub fn buffers_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.w, &mut self.u, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_layer(rng: &mut ChaCha8Rng, d: usize, h: usize) -> LstmLayer {
        let mut layer = LstmLayer::zeros(d, h);
        for buf in layer.buffers_mut() {
            buf.iter_mut().for_each(|x| *x = rng.random_range(-0.8..0.8));
        }
        layer
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let layer = LstmLayer::zeros(3, 4);
        let seq: Vec<f64> = (0..15).map(|i| i as f64 * 0.37 - 2.0).collect();
        let out = layer.forward(&seq, &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(out.hidden.iter().all(|&v| v == 0.0));
        assert!(out.c_last.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_hand_evaluation() {
        // D = H = 1; rows are (i, f, g, o)
        let layer = LstmLayer {
            input_size: 1,
            hidden_size: 1,
            w: vec![0.5, -0.3, 0.8, 0.2],
            u: vec![0.1, 0.4, -0.6, 0.7],
            b: vec![0.0, 1.0, 0.1, -0.2],
        };
        let (x, h0, c0) = (2.0, 0.5, -0.25);
        let out = layer.forward(&[x], &[h0], &[c0]).unwrap();
        // pre-activations by hand:
        // i: 0.5*2 + 0.1*0.5 + 0    = 1.05
        // f: -0.3*2 + 0.4*0.5 + 1   = 0.6
        // g: 0.8*2 - 0.6*0.5 + 0.1  = 1.4
        // o: 0.2*2 + 0.7*0.5 - 0.2  = 0.55
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (i, f, g, o) = (s(1.05), s(0.6), 1.4f64.tanh(), s(0.55));
        let c = f * c0 + i * g;
        let h = o * c.tanh();
        // evaluated independently with a calculator
        assert!((i - 0.740_774_899_182_154).abs() < 1e-14);
        assert!((c - 0.494_432_201_381_336_1).abs() < 1e-14);
        assert!((h - 0.290_261_060_665_538_5).abs() < 1e-14);
        assert!((out.c_last[0] - c).abs() < 1e-15);
        assert!((out.h_last[0] - h).abs() < 1e-15);
    }

    #[test]
    fn unrolled_equals_chained_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layer = random_layer(&mut rng, 2, 3);
        let seq: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let full = layer.forward(&seq, &[0.0; 3], &[0.0; 3]).unwrap();
        let (mut h, mut c) = (vec![0.0; 3], vec![0.0; 3]);
        let mut chained = Vec::new();
        for t in 0..5 {
            let step = layer.forward(&seq[t * 2..t * 2 + 2], &h, &c).unwrap();
            chained.extend_from_slice(&step.hidden);
            h = step.h_last;
            c = step.c_last;
        }
        assert_eq!(full.hidden, chained);
        assert_eq!(full.c_last, c);
    }

    #[test]
    fn rejects_bad_input() {
        let layer = LstmLayer::zeros(2, 3);
        assert!(matches!(layer.forward(&[1.0; 5], &[0.0; 3], &[0.0; 3]), Err(NnError::Shape(_))));
        assert!(matches!(
            layer.forward(&[1.0, f64::NAN], &[0.0; 3], &[0.0; 3]),
            Err(NnError::NonFiniteInput)
        ));
        let out = layer.forward(&[1.0; 4], &[0.0; 3], &[0.0; 3]).unwrap();
        assert!(layer.backward(&out.cache, &[0.0; 5], None, None).is_err());
        let other = LstmLayer::zeros(3, 3);
        assert!(other.backward(&out.cache, &[0.0; 6], None, None).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer = random_layer(&mut rng, 2, 3);
        let seq: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = layer.forward(&seq, &[0.1; 3], &[0.2; 3]).unwrap();
        let back = layer.backward(&out.cache, &[0.0; 12], None, None).unwrap();
        for buf in back.grads.buffers() {
            assert!(buf.iter().all(|&g| g == 0.0));
        }
    }

    /// Loss = Σ r ⊙ hidden + Σ s ⊙ c_last, so the upstream gradients are r and s.
    fn probe_loss(layer: &LstmLayer, seq: &[f64], h0: &[f64], c0: &[f64], r: &[f64], s: &[f64]) -> f64 {
        let out = layer.forward(seq, h0, c0).unwrap();
        out.hidden.iter().zip(r).map(|(a, b)| a * b).sum::<f64>()
            + out.c_last.iter().zip(s).map(|(a, b)| a * b).sum::<f64>()
    }

    #[test]
    fn gradients_match_central_differences() {
        let (d, h, len) = (2, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let layer = random_layer(&mut rng, d, h);
        let seq: Vec<f64> = (0..len * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h0: Vec<f64> = (0..h).map(|_| rng.random_range(-0.5..0.5)).collect();
        let c0: Vec<f64> = (0..h).map(|_| rng.random_range(-0.5..0.5)).collect();
        let r: Vec<f64> = (0..len * h).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s: Vec<f64> = (0..h).map(|_| rng.random_range(-1.0..1.0)).collect();

        let out = layer.forward(&seq, &h0, &c0).unwrap();
        let back = layer.backward(&out.cache, &r, None, Some(&s)).unwrap();

        let eps = 1e-5;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-7);
        let mut worst: f64 = 0.0;
        for which in 0..3 {
            for idx in 0..layer.buffers()[which].len() {
                let mut plus = layer.clone();
                plus.buffers_mut()[which][idx] += eps;
                let mut minus = layer.clone();
                minus.buffers_mut()[which][idx] -= eps;
                let numeric = (probe_loss(&plus, &seq, &h0, &c0, &r, &s)
                    - probe_loss(&minus, &seq, &h0, &c0, &r, &s))
                    / (2.0 * eps);
                worst = worst.max(rel(back.grads.buffers()[which][idx], numeric));
            }
        }
        for idx in 0..seq.len() {
            let mut p = seq.clone();
            p[idx] += eps;
            let mut m = seq.clone();
            m[idx] -= eps;
            let numeric = (probe_loss(&layer, &p, &h0, &c0, &r, &s)
                - probe_loss(&layer, &m, &h0, &c0, &r, &s))
                / (2.0 * eps);
            worst = worst.max(rel(back.d_input[idx], numeric));
        }
        for idx in 0..h {
            let mut p = h0.clone();
            p[idx] += eps;
            let mut m = h0.clone();
            m[idx] -= eps;
            let numeric = (probe_loss(&layer, &seq, &p, &c0, &r, &s)
                - probe_loss(&layer, &seq, &m, &c0, &r, &s))
                / (2.0 * eps);
            worst = worst.max(rel(back.d_h0[idx], numeric));
            let mut p = c0.clone();
            p[idx] += eps;
            let mut m = c0.clone();
            m[idx] -= eps;
            let numeric = (probe_loss(&layer, &seq, &h0, &p, &r, &s)
                - probe_loss(&layer, &seq, &h0, &m, &r, &s))
                / (2.0 * eps);
            worst = worst.max(rel(back.d_c0[idx], numeric));
        }
        assert!(worst < 1e-6, "max relative error {worst}");
    }

    #[test]
    fn duplicated_input_doubles_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let layer = random_layer(&mut rng, 2, 3);
        let seq: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let up: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = layer.forward(&seq, &[0.0; 3], &[0.0; 3]).unwrap();
        let single = layer.backward(&out.cache, &up, None, None).unwrap().grads;
        let mut batch = LstmGrads::zeros_like(&layer);
        for _ in 0..2 {
            let out = layer.forward(&seq, &[0.0; 3], &[0.0; 3]).unwrap();
            layer.backward_into(&out.cache, &up, None, None, &mut batch).unwrap();
        }
        for (a, b) in batch.buffers().iter().zip(single.buffers()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - 2.0 * y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn init_sets_forget_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = LstmLayer::init(&mut rng, 6, 19);
        layer.check_shapes().unwrap();
        assert_eq!(&layer.b[19..38], &[1.0; 19]);
        assert!(layer.b[..19].iter().chain(&layer.b[38..]).all(|&b| b == 0.0));
        assert_eq!(layer.param_count(), 4 * 19 * (6 + 19) + 4 * 19);
    }
}
