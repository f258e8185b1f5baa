//! IMU stream ingestion, normalization, windowing and trial splitting.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Number of IMU channels: three accelerometer axes then three gyroscope axes.
pub const CHANNELS: usize = 6;

/// Bit-exact CSV header.
pub const CSV_HEADER: [&str; 7] = [
    "timestamp", "accel_x", "accel_y", "accel_z", "gyro_x", "gyro_y", "gyro_z",
];

pub const CHANNEL_NAMES: [&str; CHANNELS] =
    ["accel_x", "accel_y", "accel_z", "gyro_x", "gyro_y", "gyro_z"];

#[derive(Debug, thiserror::Error)]
pub enum TimeseriesError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("missing channel column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("row {row}: timestamp {t} does not increase (previous {prev})")]
    NonMonotone { row: usize, t: f64, prev: f64 },
    #[error("series is empty")]
    Empty,
    #[error("no training input")]
    NoTrainingData,
    #[error("train fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("no normal trials available for training")]
    NoNormalTrials,
    #[error("invalid window spec: {0}")]
    BadWindowSpec(String),
    #[error("annotation sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
}

/// One IMU reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    /// accel_x, accel_y, accel_z (m/s²), gyro_x, gyro_y, gyro_z (rad/s).
    pub values: [f64; CHANNELS],
}

/// Trial-level behavior label. Never used as a training signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Normal,
    TipOverRisk,
    Slip,
    #[default]
    Unlabeled,
}

impl Behavior {
    /// Unlabeled trials are assumed to be nominal operation.
    pub fn trainable(self) -> bool {
        matches!(self, Behavior::Normal | Behavior::Unlabeled)
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Behavior::Normal => "normal",
            Behavior::TipOverRisk => "tip_over_risk",
            Behavior::Slip => "slip",
            Behavior::Unlabeled => "unlabeled",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateSeries {
    samples: Vec<Sample>,
    nominal_rate: f64,
    pub annotation: Behavior,
}

impl MultivariateSeries {
    /// Validates ordering and finiteness; estimates the nominal rate from
    /// the median sample spacing (falls back to 1 Hz for a single sample).
    pub fn new(samples: Vec<Sample>, annotation: Behavior) -> Result<Self, TimeseriesError> {
        if samples.is_empty() {
            return Err(TimeseriesError::Empty);
        }
        for (row, s) in samples.iter().enumerate() {
            if !s.t.is_finite() || s.values.iter().any(|v| !v.is_finite()) {
                return Err(TimeseriesError::MalformedRow {
                    row: row + 1,
                    reason: "non-finite value".into(),
                });
            }
        }
        for (row, pair) in samples.windows(2).enumerate() {
            if pair[1].t <= pair[0].t {
                return Err(TimeseriesError::NonMonotone {
                    row: row + 2,
                    t: pair[1].t,
                    prev: pair[0].t,
                });
            }
        }
        let nominal_rate = estimate_rate(&samples);
        Ok(Self {
            samples,
            nominal_rate,
            annotation,
        })
    }

    /// Builds a series from a row-major T×6 matrix sampled uniformly at `rate`.
    pub fn from_matrix(
        values: &[f64],
        rate: f64,
        annotation: Behavior,
    ) -> Result<Self, TimeseriesError> {
        let samples = values
            .chunks_exact(CHANNELS)
            .enumerate()
            .map(|(i, row)| Sample {
                t: i as f64 / rate,
                values: row.try_into().expect("chunk of CHANNELS"),
            })
            .collect();
        Self::new(samples, annotation)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn nominal_rate(&self) -> f64 {
        self.nominal_rate
    }

    /// Channel values flattened row-major (T×6).
    pub fn to_matrix(&self) -> Vec<f64> {
        self.samples.iter().flat_map(|s| s.values).collect()
    }

    fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let mut values = s.values;
                for (c, v) in values.iter_mut().enumerate() {
                    *v = f(c, *v);
                }
                Sample { t: s.t, values }
            })
            .collect();
        Self {
            samples,
            nominal_rate: self.nominal_rate,
            annotation: self.annotation,
        }
    }
}

fn estimate_rate(samples: &[Sample]) -> f64 {
    if samples.len() < 2 {
        return 1.0;
    }
    let mut dts: Vec<f64> = samples.windows(2).map(|w| w[1].t - w[0].t).collect();
    dts.sort_by(f64::total_cmp);
    let n = dts.len();
    let median = if n % 2 == 1 {
        dts[n / 2]
    } else {
        0.5 * (dts[n / 2 - 1] + dts[n / 2])
    };
    1.0 / median
}

/// Parses the IMU CSV format from any reader. Row numbers in errors are
/// 1-based data rows (the header is row 0).
pub fn parse_csv<R: Read>(reader: R) -> Result<MultivariateSeries, TimeseriesError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| TimeseriesError::MalformedRow {
        row: 0,
        reason: e.to_string(),
    })?;
    let found: Vec<&str> = header.iter().collect();
    for name in &CSV_HEADER {
        if !found.contains(name) {
            return Err(TimeseriesError::MissingColumn((*name).to_string()));
        }
    }
    if found != CSV_HEADER {
        return Err(TimeseriesError::Header {
            expected: CSV_HEADER.join(","),
            found: found.join(","),
        });
    }

    let mut samples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| TimeseriesError::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        if record.len() != CSV_HEADER.len() {
            return Err(TimeseriesError::MalformedRow {
                row,
                reason: format!("expected {} fields, found {}", CSV_HEADER.len(), record.len()),
            });
        }
        let mut fields = [0.0; 7];
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| TimeseriesError::MalformedRow {
                row,
                reason: format!("column `{}`: cannot parse `{}`", CSV_HEADER[j], field),
            })?;
            if !v.is_finite() {
                return Err(TimeseriesError::MalformedRow {
                    row,
                    reason: format!("column `{}`: non-finite value", CSV_HEADER[j]),
                });
            }
            fields[j] = v;
        }
        if let Some(prev) = samples.last().map(|s: &Sample| s.t) {
            if fields[0] <= prev {
                return Err(TimeseriesError::NonMonotone {
                    row,
                    t: fields[0],
                    prev,
                });
            }
        }
        samples.push(Sample {
            t: fields[0],
            values: fields[1..].try_into().expect("six channels"),
        });
    }
    MultivariateSeries::new(samples, Behavior::Unlabeled)
}

pub fn ingest_csv(path: &Path) -> Result<MultivariateSeries, TimeseriesError> {
    let file = std::fs::File::open(path)?;
    parse_csv(std::io::BufReader::new(file))
}

/// Writes a series in the ingestion format. Floats use the shortest
/// round-trip representation, so `parse_csv` recovers them exactly.
pub fn write_csv<W: std::io::Write>(
    series: &MultivariateSeries,
    writer: W,
) -> Result<(), TimeseriesError> {
    let mut w = std::io::BufWriter::new(writer);
    writeln!(w, "{}", CSV_HEADER.join(","))?;
    for s in series.samples() {
        write!(w, "{}", s.t)?;
        for v in s.values {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-trial annotation sidecar. Extra fields (such as synthetic ground
/// truth) are carried in `extra` and ignored by ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub trial_id: String,
    pub behavior: Behavior,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

pub fn parse_annotation(bytes: &[u8]) -> Result<Annotation, TimeseriesError> {
    let ann: Annotation = serde_json::from_slice(bytes)?;
    Ok(ann)
}

/// Per-channel z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [f64; CHANNELS],
    pub scale: [f64; CHANNELS],
}

impl Normalizer {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; CHANNELS],
            scale: [1.0; CHANNELS],
        }
    }

    pub fn apply(&self, series: &MultivariateSeries) -> MultivariateSeries {
        series.map_values(|c, v| (v - self.mean[c]) / self.scale[c])
    }

    pub fn invert(&self, series: &MultivariateSeries) -> MultivariateSeries {
        series.map_values(|c, v| v * self.scale[c] + self.mean[c])
    }

    pub fn apply_in_place(&self, row_major: &mut [f64]) {
        for row in row_major.chunks_exact_mut(CHANNELS) {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.scale[c];
            }
        }
    }
}

/// Pooled mean and population standard deviation per channel. Channels
/// with zero variance get scale 1.
pub fn fit_normalizer(train: &[MultivariateSeries]) -> Result<Normalizer, TimeseriesError> {
    let count: usize = train.iter().map(|s| s.len()).sum();
    if count == 0 {
        return Err(TimeseriesError::NoTrainingData);
    }
    let n = count as f64;
    let mut mean = [0.0; CHANNELS];
    for s in train.iter().flat_map(|s| s.samples()) {
        for c in 0..CHANNELS {
            mean[c] += s.values[c];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; CHANNELS];
    for s in train.iter().flat_map(|s| s.samples()) {
        for c in 0..CHANNELS {
            let d = s.values[c] - mean[c];
            var[c] += d * d;
        }
    }
    let mut scale = [1.0; CHANNELS];
    for c in 0..CHANNELS {
        let sd = (var[c] / n).sqrt();
        if sd > 0.0 && sd.is_finite() {
            scale[c] = sd;
        }
    }
    Ok(Normalizer { mean, scale })
}

/// Input/target window geometry in timesteps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub input_len: usize,
    pub output_len: usize,
    pub step: usize,
}

impl WindowSpec {
    pub fn new(input_len: usize, output_len: usize, step: usize) -> Result<Self, TimeseriesError> {
        let spec = Self {
            input_len,
            output_len,
            step,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), TimeseriesError> {
        if self.input_len == 0 || self.output_len == 0 || self.step == 0 {
            return Err(TimeseriesError::BadWindowSpec(format!(
                "input_len={}, output_len={}, step={} must all be >= 1",
                self.input_len, self.output_len, self.step
            )));
        }
        Ok(())
    }

    pub fn span(&self) -> usize {
        self.input_len + self.output_len
    }

    /// floor((T - span) / step) + 1, or 0 when the series is too short.
    pub fn window_count(&self, series_len: usize) -> usize {
        if series_len < self.span() {
            0
        } else {
            (series_len - self.span()) / self.step + 1
        }
    }
}

/// Paired input/target sequences, flattened row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowedDataset {
    pub input_len: usize,
    pub output_len: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub window_starts: Vec<usize>,
}

impl WindowedDataset {
    pub fn empty(input_len: usize, output_len: usize) -> Self {
        Self {
            input_len,
            output_len,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.window_starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window_starts.is_empty()
    }

    pub fn input(&self, k: usize) -> &[f64] {
        let w = self.input_len * CHANNELS;
        &self.inputs[k * w..(k + 1) * w]
    }

    pub fn target(&self, k: usize) -> &[f64] {
        let w = self.output_len * CHANNELS;
        &self.targets[k * w..(k + 1) * w]
    }

    /// Appends every window of `other`; start indices keep their own series' frame.
    pub fn extend(&mut self, other: &WindowedDataset) {
        assert_eq!(self.input_len, other.input_len);
        assert_eq!(self.output_len, other.output_len);
        self.inputs.extend_from_slice(&other.inputs);
        self.targets.extend_from_slice(&other.targets);
        self.window_starts.extend_from_slice(&other.window_starts);
    }

    /// Subset by window indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> WindowedDataset {
        let mut out = WindowedDataset::empty(self.input_len, self.output_len);
        for &k in indices {
            out.inputs.extend_from_slice(self.input(k));
            out.targets.extend_from_slice(self.target(k));
            out.window_starts.push(self.window_starts[k]);
        }
        out
    }
}

pub fn make_windows(series: &MultivariateSeries, spec: WindowSpec) -> WindowedDataset {
    let values = series.to_matrix();
    windows_from_matrix(&values, spec)
}

/// Windowing over a raw row-major T×6 matrix.
pub fn windows_from_matrix(values: &[f64], spec: WindowSpec) -> WindowedDataset {
    let len = values.len() / CHANNELS;
    let n = spec.window_count(len);
    let mut out = WindowedDataset::empty(spec.input_len, spec.output_len);
    out.inputs.reserve(n * spec.input_len * CHANNELS);
    out.targets.reserve(n * spec.output_len * CHANNELS);
    for k in 0..n {
        let start = k * spec.step;
        let mid = start + spec.input_len;
        let end = mid + spec.output_len;
        out.inputs
            .extend_from_slice(&values[start * CHANNELS..mid * CHANNELS]);
        out.targets
            .extend_from_slice(&values[mid * CHANNELS..end * CHANNELS]);
        out.window_starts.push(start);
    }
    out
}

/// Trial-level partition, as indices into the input list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits whole trials. Only trainable (normal or unlabeled) trials may
/// enter the training side; risk and slip trials always go to test.
pub fn split_trials(
    trials: &[MultivariateSeries],
    train_frac: f64,
    seed: u64,
) -> Result<TrialSplit, TimeseriesError> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(TimeseriesError::BadFraction(train_frac));
    }
    let mut eligible: Vec<usize> = (0..trials.len())
        .filter(|&i| trials[i].annotation.trainable())
        .collect();
    if eligible.is_empty() {
        return Err(TimeseriesError::NoNormalTrials);
    }
    let wanted = ((trials.len() as f64 * train_frac).round() as usize).clamp(1, eligible.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    let mut train: Vec<usize> = eligible[..wanted].to_vec();
    train.sort_unstable();
    let test = (0..trials.len()).filter(|i| !train.contains(i)).collect();
    Ok(TrialSplit { train, test })
}
