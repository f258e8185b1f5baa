use serde::{Deserialize, Serialize};

use super::{AutoencoderModel, AutoencoderSpec, ModelError, Seq2Seq};
use crate::nn::{Dense, LstmLayer};
use crate::timeseries::{Normalizer, WindowSpec};

pub const CHECKPOINT_FORMAT: &str = "tipguard-checkpoint/1";

/// A row-major tensor with its declared shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Self-describing JSON model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub spec: AutoencoderSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowSpec>,
    pub seed: u64,
    pub normalizer: Option<Normalizer>,
    pub tensors: Vec<NamedTensor>,
    /// Free-form provenance (run config, training trial ids, ...).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

fn tensor(name: String, shape: Vec<usize>, data: &[f64]) -> NamedTensor {
    NamedTensor {
        name,
        shape,
        data: data.to_vec(),
    }
}

fn lstm_tensors(prefix: &str, layer: &LstmLayer, out: &mut Vec<NamedTensor>) {
    let (d, h) = (layer.input_size, layer.hidden_size);
    out.push(tensor(format!("{prefix}.w"), vec![4 * h, d], &layer.w));
    out.push(tensor(format!("{prefix}.u"), vec![4 * h, h], &layer.u));
    out.push(tensor(format!("{prefix}.b"), vec![4 * h], &layer.b));
}

impl Checkpoint {
    pub fn from_model(
        model: &AutoencoderModel,
        window: Option<WindowSpec>,
        metadata: serde_json::Value,
    ) -> Self {
        let mut tensors = Vec::new();
        for (i, l) in model.net.encoder.iter().enumerate() {
            lstm_tensors(&format!("encoder.{i}"), l, &mut tensors);
        }
        for (i, l) in model.net.decoder.iter().enumerate() {
            lstm_tensors(&format!("decoder.{i}"), l, &mut tensors);
        }
        let head = &model.net.head;
        tensors.push(tensor(
            "head.weight".into(),
            vec![head.output_size, head.input_size],
            &head.weight,
        ));
        tensors.push(tensor("head.bias".into(), vec![head.output_size], &head.bias));
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            spec: model.spec.clone(),
            window,
            seed: model.seed,
            normalizer: model.normalizer.clone(),
            tensors,
            metadata,
        }
    }

    /// Rebuilds the model, checking every declared shape against the spec.
    pub fn to_model(&self) -> Result<AutoencoderModel, ModelError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!(
                "unsupported format tag `{}`",
                self.format
            )));
        }
        self.spec.validate()?;
        if let Some(n) = &self.normalizer {
            if n.scale.iter().any(|s| !(*s > 0.0 && s.is_finite()))
                || n.mean.iter().any(|m| !m.is_finite())
            {
                return Err(ModelError::Checkpoint("normalizer scale must be positive".into()));
            }
        }
        let mut it = self.tensors.iter();
        let mut take = |name: String, shape: Vec<usize>| -> Result<Vec<f64>, ModelError> {
            let t = it
                .next()
                .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor `{name}`")))?;
            let count: usize = shape.iter().product();
            if t.name != name || t.shape != shape || t.data.len() != count {
                return Err(ModelError::Checkpoint(format!(
                    "tensor `{}` {:?} ({} values) does not match expected `{name}` {shape:?}",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::Checkpoint(format!("tensor `{name}` has non-finite values")));
            }
            Ok(t.data.clone())
        };
        let mut lstm = |prefix: String, d: usize, h: usize| -> Result<LstmLayer, ModelError> {
            Ok(LstmLayer {
                input_size: d,
                hidden_size: h,
                w: take(format!("{prefix}.w"), vec![4 * h, d])?,
                u: take(format!("{prefix}.u"), vec![4 * h, h])?,
                b: take(format!("{prefix}.b"), vec![4 * h])?,
            })
        };

        let sizes = &self.spec.encoder_layer_sizes;
        let mut d = self.spec.channels;
        let mut encoder = Vec::new();
        for (i, &h) in sizes.iter().enumerate() {
            encoder.push(lstm(format!("encoder.{i}"), d, h)?);
            d = h;
        }
        let mut decoder = Vec::new();
        for (i, &h) in sizes.iter().rev().enumerate() {
            decoder.push(lstm(format!("decoder.{i}"), d, h)?);
            d = h;
        }
        let c = self.spec.channels;
        let head = Dense {
            input_size: d,
            output_size: c,
            weight: take("head.weight".into(), vec![c, d])?,
            bias: take("head.bias".into(), vec![c])?,
        };
        if it.next().is_some() {
            return Err(ModelError::Checkpoint("unexpected extra tensors".into()));
        }
        Ok(AutoencoderModel {
            spec: self.spec.clone(),
            net: Seq2Seq {
                input_len: self.spec.input_len,
                output_len: self.spec.output_len,
                channels: c,
                encoder,
                decoder,
                head,
            },
            normalizer: self.normalizer.clone(),
            seed: self.seed,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ModelError> {
        serde_json::from_slice(bytes).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }
}
