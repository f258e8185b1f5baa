//! Per-channel forecast-error thresholds and event extraction.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{AutoencoderModel, ModelError};
use crate::synth::{GroundTruth, TransientKind};
use crate::timeseries::{make_windows, MultivariateSeries, Normalizer, WindowSpec, WindowedDataset, CHANNELS, CHANNEL_NAMES};

pub const MIN_DISTRIBUTION_SAMPLES: usize = 100;
pub const SUMMARY_QUANTILES: [f64; 5] = [0.5, 0.9, 0.95, 0.99, 0.995];
pub const DEFAULT_QUANTILE: f64 = 0.995;
/// Unflagged windows tolerated inside one event.
pub const GAP_TOLERANCE: usize = 1;

pub const TABLE4_MSE: [f64; CHANNELS] = [0.04, 0.04, 0.04, 0.02, 0.05, 0.04];
pub const TABLE4_MAE: [f64; CHANNELS] = [0.25; CHANNELS];

#[derive(Debug, thiserror::Error)]
pub enum DetectorError {
    #[error("channel {channel} has {found} error samples, need at least {MIN_DISTRIBUTION_SAMPLES}")]
    TooFewSamples { channel: usize, found: usize },
    #[error("channel {0} errors are all zero")]
    AllZero(usize),
    #[error("non-finite error value on channel {0}")]
    NonFinite(usize),
    #[error("quantile {0} outside (0, 1)")]
    BadQuantile(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Mae,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Mae => "mae",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mse" => Ok(Metric::Mse),
            "mae" => Ok(Metric::Mae),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// Per-channel error of one forecast against its target (both L_out×6).
pub fn channel_errors(pred: &[f64], target: &[f64], metric: Metric) -> [f64; CHANNELS] {
    let mut acc = [0.0; CHANNELS];
    let steps = (target.len() / CHANNELS).max(1);
    for (p, y) in pred.chunks_exact(CHANNELS).zip(target.chunks_exact(CHANNELS)) {
        for c in 0..CHANNELS {
            let d = p[c] - y[c];
            acc[c] += match metric {
                Metric::Mse => d * d,
                Metric::Mae => d.abs(),
            };
        }
    }
    acc.map(|a| a / steps as f64)
}

/// Errors for every window of an already-normalized dataset.
pub fn dataset_errors(
    model: &AutoencoderModel,
    ds: &WindowedDataset,
    metric: Metric,
) -> Result<Vec<[f64; CHANNELS]>, ModelError> {
    model.check_dataset(ds)?;
    (0..ds.len())
        .map(|k| Ok(channel_errors(&model.forecast(ds.input(k))?, ds.target(k), metric)))
        .collect()
}

/// Errors of every window (at `step`) over raw series, normalized with the
/// model's own normalizer.
pub fn series_errors(
    model: &AutoencoderModel,
    series: &[&MultivariateSeries],
    step: usize,
    metric: Metric,
) -> Result<Vec<[f64; CHANNELS]>, DetectorError> {
    let spec = WindowSpec::new(model.spec.input_len, model.spec.output_len, step)
        .map_err(|e| ModelError::InvalidSpec(e.to_string()))?;
    let norm = model.normalizer.clone().unwrap_or_else(Normalizer::identity);
    let mut out = Vec::new();
    for s in series {
        out.extend(dataset_errors(model, &make_windows(&norm.apply(s), spec), metric)?);
    }
    Ok(out)
}

/// Linear-interpolation quantile of a sorted sample.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossDistribution {
    pub metric: Metric,
    /// Sorted ascending, one vector per channel.
    pub samples: Vec<Vec<f64>>,
    /// (probability, per-channel value) for each summary quantile.
    pub quantiles: Vec<(f64, [f64; CHANNELS])>,
}

impl LossDistribution {
    pub fn fit(errors: &[[f64; CHANNELS]], metric: Metric) -> Result<Self, DetectorError> {
        let mut samples = Vec::with_capacity(CHANNELS);
        for c in 0..CHANNELS {
            if errors.len() < MIN_DISTRIBUTION_SAMPLES {
                return Err(DetectorError::TooFewSamples { channel: c, found: errors.len() });
            }
            let mut col: Vec<f64> = errors.iter().map(|e| e[c]).collect();
            if col.iter().any(|v| !v.is_finite()) {
                return Err(DetectorError::NonFinite(c));
            }
            if col.iter().all(|v| *v == 0.0) {
                return Err(DetectorError::AllZero(c));
            }
            col.sort_by(f64::total_cmp);
            samples.push(col);
        }
        let quantiles = SUMMARY_QUANTILES
            .iter()
            .map(|&p| (p, std::array::from_fn(|c| quantile(&samples[c], p))))
            .collect();
        Ok(Self { metric, samples, quantiles })
    }

    pub fn quantile(&self, channel: usize, p: f64) -> f64 {
        quantile(&self.samples[channel], p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub metric: Metric,
    pub values: [f64; CHANNELS],
    /// "quantile:<p>" or "table4".
    pub source: String,
}

impl ThresholdSet {
    /// Hand-picked per-axis thresholds shipped as a preset.
    pub fn table4(metric: Metric) -> Self {
        Self {
            metric,
            values: match metric {
                Metric::Mse => TABLE4_MSE,
                Metric::Mae => TABLE4_MAE,
            },
            source: "table4".into(),
        }
    }
}

pub fn select_thresholds(dist: &LossDistribution, quantile: f64) -> Result<ThresholdSet, DetectorError> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(DetectorError::BadQuantile(quantile));
    }
    Ok(ThresholdSet {
        metric: dist.metric,
        values: std::array::from_fn(|c| dist.quantile(c, quantile)),
        source: format!("quantile:{quantile}"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyEvent {
    pub trial_id: String,
    pub start_ts: f64,
    pub end_ts: f64,
    pub metric: Metric,
    pub channels: Vec<String>,
    /// Parallel to `channels`.
    pub peak_errors: Vec<f64>,
}

/// Scored window: sample index of the window start plus per-channel verdicts.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowScore {
    pub window_start: usize,
    pub errors: [f64; CHANNELS],
    pub flagged: [bool; CHANNELS],
}

impl WindowScore {
    pub fn any(&self) -> bool {
        self.flagged.iter().any(|f| *f)
    }
}

/// One merged run of windows, by window index (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub first: usize,
    pub last: usize,
}

/// Merges flagged positions, bridging gaps of at most `gap` unflagged entries.
pub fn merge_runs(flags: &[bool], gap: usize) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    for (k, _) in flags.iter().enumerate().filter(|(_, f)| **f) {
        match runs.last_mut() {
            Some(r) if k - r.last <= gap + 1 => r.last = k,
            _ => runs.push(Run { first: k, last: k }),
        }
    }
    runs
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub trial_id: String,
    pub spec: WindowSpec,
    pub windows: Vec<WindowScore>,
    pub runs: Vec<Run>,
    pub events: Vec<AnomalyEvent>,
}

impl Detection {
    /// First flagged window index per channel inside a run.
    pub fn trigger_indices(&self, run: Run) -> [Option<usize>; CHANNELS] {
        std::array::from_fn(|c| (run.first..=run.last).find(|&k| self.windows[k].flagged[c]))
    }
}

/// Scores every window of a raw series and groups exceedances into events.
pub fn detect(
    model: &AutoencoderModel,
    series: &MultivariateSeries,
    thresholds: &ThresholdSet,
    spec: WindowSpec,
    trial_id: &str,
) -> Result<Detection, DetectorError> {
    let norm = model.normalizer.clone().unwrap_or_else(Normalizer::identity);
    let ds = make_windows(&norm.apply(series), spec);
    let errors = dataset_errors(model, &ds, thresholds.metric)?;
    let windows: Vec<WindowScore> = errors
        .into_iter()
        .zip(&ds.window_starts)
        .map(|(errors, &window_start)| WindowScore {
            window_start,
            errors,
            flagged: std::array::from_fn(|c| errors[c] > thresholds.values[c]),
        })
        .collect();
    let flags: Vec<bool> = windows.iter().map(WindowScore::any).collect();
    let runs = merge_runs(&flags, GAP_TOLERANCE);
    let samples = series.samples();
    let events = runs
        .iter()
        .map(|r| {
            let first = &windows[r.first];
            let last = &windows[r.last];
            let start = first.window_start + spec.input_len;
            let end = last.window_start + spec.input_len + spec.output_len - 1;
            let mut channels = Vec::new();
            let mut peak_errors = Vec::new();
            for c in 0..CHANNELS {
                let hits = windows[r.first..=r.last].iter().filter(|w| w.flagged[c]);
                if let Some(peak) = hits.map(|w| w.errors[c]).reduce(f64::max) {
                    channels.push(CHANNEL_NAMES[c].to_string());
                    peak_errors.push(peak);
                }
            }
            AnomalyEvent {
                trial_id: trial_id.to_string(),
                start_ts: samples[start].t,
                end_ts: samples[end].t,
                metric: thresholds.metric,
                channels,
                peak_errors,
            }
        })
        .collect();
    Ok(Detection {
        trial_id: trial_id.to_string(),
        spec,
        windows,
        runs,
        events,
    })
}

pub fn write_events_jsonl<W: Write>(events: &[AnomalyEvent], mut out: W) -> Result<(), DetectorError> {
    for e in events {
        serde_json::to_writer(&mut out, e).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// `window_start, channel, metric, error, threshold, flagged` rows.
pub fn write_plot_csv<W: Write>(
    det: &Detection,
    thresholds: &ThresholdSet,
    mut out: W,
) -> Result<(), DetectorError> {
    writeln!(out, "window_start,channel,metric,error,threshold,flagged")?;
    for w in &det.windows {
        for c in 0..CHANNELS {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                w.window_start,
                CHANNEL_NAMES[c],
                thresholds.metric,
                w.errors[c],
                thresholds.values[c],
                w.flagged[c]
            )?;
        }
    }
    Ok(())
}

/// Event-level agreement with injected transients.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventScore {
    pub tip_over_intervals: usize,
    pub tip_over_detected: usize,
    /// Events overlapping at least one tip-over interval.
    pub tip_over_events: usize,
    /// Events overlapping no injected interval.
    pub false_positives: usize,
    /// Events overlapping only slip intervals.
    pub slip_events: usize,
}

impl EventScore {
    pub fn recall(&self) -> Option<f64> {
        (self.tip_over_intervals > 0).then(|| self.tip_over_detected as f64 / self.tip_over_intervals as f64)
    }

    /// Share of events that overlap a tip-over interval.
    pub fn precision(&self) -> Option<f64> {
        let total = self.tip_over_events + self.false_positives + self.slip_events;
        (total > 0).then(|| self.tip_over_events as f64 / total as f64)
    }

    pub fn add(&mut self, other: &EventScore) {
        self.tip_over_intervals += other.tip_over_intervals;
        self.tip_over_detected += other.tip_over_detected;
        self.tip_over_events += other.tip_over_events;
        self.false_positives += other.false_positives;
        self.slip_events += other.slip_events;
    }
}

/// Matches events against ground truth; an event hits an interval when its
/// sample range overlaps the interval widened by `L_out` samples each side.
pub fn score_events(det: &Detection, truth: &GroundTruth) -> EventScore {
    let margin = det.spec.output_len;
    let spans: Vec<(usize, usize)> = det
        .runs
        .iter()
        .map(|r| {
            (
                det.windows[r.first].window_start + det.spec.input_len,
                det.windows[r.last].window_start + det.spec.input_len + det.spec.output_len - 1,
            )
        })
        .collect();
    let hits = |iv: &crate::synth::Interval, s: &(usize, usize)| {
        s.0 <= iv.end + margin && s.1 + margin >= iv.start
    };
    let mut score = EventScore::default();
    for iv in truth.of_kind(TransientKind::TipOver) {
        score.tip_over_intervals += 1;
        if spans.iter().any(|s| hits(iv, s)) {
            score.tip_over_detected += 1;
        }
    }
    for s in &spans {
        let tip = truth.of_kind(TransientKind::TipOver).any(|iv| hits(iv, s));
        let slip = truth.of_kind(TransientKind::Slip).any(|iv| hits(iv, s));
        if tip {
            score.tip_over_events += 1;
        } else if slip {
            score.slip_events += 1;
        } else {
            score.false_positives += 1;
        }
    }
    score
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{build, AutoencoderSpec};
    use crate::synth::Interval;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_quantiles_match_order_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let errors: Vec<[f64; 6]> = (0..10_000)
            .map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0)))
            .collect();
        let dist = LossDistribution::fit(&errors, Metric::Mse).unwrap();
        for c in 0..6 {
            assert!((dist.quantile(c, 0.99) - 0.99).abs() < 0.01);
        }
        for w in dist.quantiles.windows(2) {
            for c in 0..6 {
                assert!(w[0].1[c] <= w[1].1[c]);
            }
        }
        let p: Vec<f64> = dist.quantiles.iter().map(|q| q.0).collect();
        assert_eq!(p, SUMMARY_QUANTILES);
    }

    #[test]
    fn median_of_symmetric_errors() {
        let errors: Vec<[f64; 6]> = (0..=200).map(|i| [i as f64; 6]).collect();
        let dist = LossDistribution::fit(&errors, Metric::Mae).unwrap();
        let t = select_thresholds(&dist, 0.5).unwrap();
        assert_eq!(t.values, [100.0; 6]);
        assert_eq!(quantile(&[1.0, 2.0], 0.25), 1.25);
    }

    #[test]
    fn distribution_rejections() {
        let few = vec![[1.0; 6]; 99];
        assert!(matches!(
            LossDistribution::fit(&few, Metric::Mse),
            Err(DetectorError::TooFewSamples { found: 99, .. })
        ));
        let mut zero = vec![[1.0; 6]; 100];
        zero.iter_mut().for_each(|e| e[4] = 0.0);
        assert!(matches!(LossDistribution::fit(&zero, Metric::Mse), Err(DetectorError::AllZero(4))));
        let mut nan = vec![[1.0; 6]; 100];
        nan[3][1] = f64::NAN;
        assert!(matches!(LossDistribution::fit(&nan, Metric::Mse), Err(DetectorError::NonFinite(1))));
        let ok = LossDistribution::fit(&vec![[1.0; 6]; 100], Metric::Mse).unwrap();
        for q in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(select_thresholds(&ok, q).is_err());
        }
    }

    #[test]
    fn table4_presets() {
        assert_eq!(ThresholdSet::table4(Metric::Mse).values, [0.04, 0.04, 0.04, 0.02, 0.05, 0.04]);
        assert_eq!(ThresholdSet::table4(Metric::Mae).values, [0.25; 6]);
    }

    #[test]
    fn metric_values() {
        let pred = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let zero = [0.0; 12];
        assert_eq!(channel_errors(&pred, &zero, Metric::Mse)[0], 5.0);
        assert_eq!(channel_errors(&pred, &zero, Metric::Mae)[0], 2.0);
        assert_eq!(channel_errors(&pred, &zero, Metric::Mse)[1], 0.0);
        assert_eq!("mae".parse::<Metric>().unwrap(), Metric::Mae);
        assert!("rmse".parse::<Metric>().is_err());
    }

    #[test]
    fn runs_bridge_single_gaps() {
        let f = |s: &str| s.chars().map(|c| c == '1').collect::<Vec<bool>>();
        assert_eq!(merge_runs(&f("0110100011"), 1), vec![Run { first: 1, last: 4 }, Run { first: 8, last: 9 }]);
        assert_eq!(merge_runs(&f("101"), 0).len(), 2);
        assert!(merge_runs(&f("000"), 1).is_empty());
    }

    fn model_world(len: usize) -> (AutoencoderModel, MultivariateSeries, WindowSpec) {
        // Zero head weights: the forecast is the bias, so a series held at the
        // bias is predicted exactly.
        let mut model = build(&AutoencoderSpec::new(5, 2, vec![4], 0.0), 1).unwrap();
        model.net.head.weight.iter_mut().for_each(|w| *w = 0.0);
        model.net.head.bias = vec![0.1, -0.2, 0.3, 0.0, 0.05, -0.05];
        let values: Vec<f64> = (0..len).flat_map(|_| model.net.head.bias.clone()).collect();
        let series = MultivariateSeries::from_matrix(&values, 100.0, crate::timeseries::Behavior::Normal).unwrap();
        (model, series, WindowSpec::new(5, 2, 1).unwrap())
    }

    #[test]
    fn own_forecasts_yield_no_events() {
        let (model, series, spec) = model_world(200);
        let det = detect(&model, &series, &ThresholdSet::table4(Metric::Mse), spec, "t").unwrap();
        assert_eq!(det.windows.len(), spec.window_count(200));
        assert!(det.events.is_empty());
    }

    #[test]
    fn injected_bump_gives_one_event() {
        let (model, series, spec) = model_world(200);
        let mut values = series.to_matrix();
        for i in 100..104 {
            values[i * 6 + 3] += 2.0;
        }
        let series = MultivariateSeries::from_matrix(&values, 100.0, crate::timeseries::Behavior::TipOverRisk).unwrap();
        let det = detect(&model, &series, &ThresholdSet::table4(Metric::Mse), spec, "t7").unwrap();
        assert_eq!(det.events.len(), 1);
        let e = &det.events[0];
        assert_eq!(e.channels, vec!["gyro_x".to_string()]);
        assert!(e.start_ts <= 1.03 && e.end_ts >= 1.0);
        let truth = GroundTruth {
            intervals: vec![Interval { kind: TransientKind::TipOver, start: 100, end: 103 }],
        };
        let score = score_events(&det, &truth);
        assert_eq!((score.tip_over_detected, score.false_positives), (1, 0));
        assert_eq!(score.recall(), Some(1.0));
        assert_eq!(score.precision(), Some(1.0));

        let mut buf = Vec::new();
        write_events_jsonl(&det.events, &mut buf).unwrap();
        let line = String::from_utf8(buf).unwrap();
        assert_eq!(line.lines().count(), 1);
        let back: AnomalyEvent = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(&back, e);

        let mut csv = Vec::new();
        write_plot_csv(&det, &ThresholdSet::table4(Metric::Mse), &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 6 * det.windows.len());
        assert!(text.starts_with("window_start,channel,metric,error,threshold,flagged\n"));
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn merging_is_idempotent(flags in proptest::collection::vec(any::<bool>(), 0..80)) {
                let runs = merge_runs(&flags, GAP_TOLERANCE);
                let mut filled = vec![false; flags.len()];
                for r in &runs {
                    filled[r.first..=r.last].iter_mut().for_each(|f| *f = true);
                }
                prop_assert_eq!(merge_runs(&filled, GAP_TOLERANCE), runs);
            }
        }
    }
}
