//! Synthetic rover-like IMU trials with labelled transients.
//!
//! The baseline is a wheel-rate undulation (fundamental plus second
//! harmonic) whose frequency wanders slowly, a slow slope-attitude drift,
//! and white noise. Tip-over transients add a growing roll-rate ramp and
//! lateral/vertical acceleration steps; slips add a short high-frequency
//! burst on the horizontal accelerometer axes.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::seeding::mix;
use crate::timeseries::{Behavior, MultivariateSeries, CHANNELS};

/// Per-channel undulation amplitude (accel m/s², gyro rad/s).
pub const CHANNEL_AMPLITUDE: [f64; CHANNELS] = [0.8, 0.5, 1.5, 0.15, 0.25, 0.08];
const GRAVITY: f64 = 9.81;
/// Wheel-to-sensor phase of each channel's fundamental and second harmonic,
/// fixed by the vehicle geometry.
const VEHICLE_PHASE: [f64; CHANNELS] = [0.0, 1.9, 0.7, 2.6, 4.1, 5.3];
const VEHICLE_PHASE2: [f64; CHANNELS] = [1.2, 3.3, 5.8, 0.4, 2.2, 4.7];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unknown preset `{0}` (known: smoke, paper-analog)")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransientKind {
    TipOver,
    Slip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transient {
    pub kind: TransientKind,
    /// Seconds from trial start.
    pub start: f64,
    pub duration: f64,
    /// Multiple of the channel undulation amplitude.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub duration: f64,
    pub rate: f64,
    pub wheel_frequency: f64,
    pub noise_sigma: [f64; CHANNELS],
    pub transients: Vec<Transient>,
    pub seed: u64,
}

impl SynthConfig {
    /// 2 Hz undulation at 100 Hz with noise at 5% of each channel's amplitude.
    pub fn new(duration: f64, seed: u64) -> Self {
        Self {
            duration,
            rate: 100.0,
            wheel_frequency: 2.0,
            noise_sigma: CHANNEL_AMPLITUDE.map(|a| 0.05 * a),
            transients: Vec::new(),
            seed,
        }
    }

    pub fn with_transient(mut self, kind: TransientKind, start: f64, duration: f64, amplitude: f64) -> Self {
        self.transients.push(Transient {
            kind,
            start,
            duration,
            amplitude,
        });
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return bad(format!("rate {} must be positive", self.rate));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) || self.sample_count() < 2 {
            return bad(format!("duration {} too short", self.duration));
        }
        if !(self.wheel_frequency > 0.0 && self.wheel_frequency.is_finite()) {
            return bad("wheel frequency must be positive".into());
        }
        if self.noise_sigma.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("noise sigma must be non-negative".into());
        }
        for t in &self.transients {
            if !(t.amplitude > 0.0 && t.amplitude.is_finite()) {
                return bad(format!("transient amplitude {} must be positive", t.amplitude));
            }
            if !(t.start >= 0.0 && t.duration > 0.0 && t.start + t.duration <= self.duration) {
                return bad(format!(
                    "transient [{}, {}) outside trial of {} s",
                    t.start,
                    t.start + t.duration,
                    self.duration
                ));
            }
        }
        let mut spans: Vec<(usize, usize)> = self.intervals().iter().map(|i| (i.start, i.end)).collect();
        spans.sort_unstable();
        if spans.windows(2).any(|w| w[1].0 <= w[0].1) {
            return bad("transients overlap".into());
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.duration * self.rate).round() as usize
    }

    fn intervals(&self) -> Vec<Interval> {
        self.transients
            .iter()
            .map(|t| {
                let start = (t.start * self.rate).round() as usize;
                let len = ((t.duration * self.rate).round() as usize).max(1);
                Interval {
                    kind: t.kind,
                    start,
                    end: start + len - 1,
                }
            })
            .collect()
    }

    pub fn behavior(&self) -> Behavior {
        if self.transients.iter().any(|t| t.kind == TransientKind::TipOver) {
            Behavior::TipOverRisk
        } else if !self.transients.is_empty() {
            Behavior::Slip
        } else {
            Behavior::Normal
        }
    }
}

/// Inclusive sample-index range of one injected transient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub kind: TransientKind,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct GroundTruth {
    pub intervals: Vec<Interval>,
}

impl GroundTruth {
    pub fn of_kind(&self, kind: TransientKind) -> impl Iterator<Item = &Interval> {
        self.intervals.iter().filter(move |i| i.kind == kind)
    }
}

/// Channels a transient kind perturbs.
pub fn affected_channels(kind: TransientKind) -> &'static [usize] {
    match kind {
        TransientKind::TipOver => &[1, 2, 3],
        TransientKind::Slip => &[0, 1],
    }
}

/// Ornstein-Uhlenbeck path with unit stationary variance.
fn ou_path(rng: &mut ChaCha8Rng, n: usize, dt: f64, tau: f64) -> Vec<f64> {
    let a = (-dt / tau).exp();
    let b = (1.0 - a * a).sqrt();
    let mut x: f64 = StandardNormal.sample(rng);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            x = a * x + b * z;
            x
        })
        .collect()
}

/// Transient-free signal, split out so tests can measure injected energy.
fn baseline(cfg: &SynthConfig) -> Vec<f64> {
    let n = cfg.sample_count();
    let dt = 1.0 / cfg.rate;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x5EED));
    let speed = ou_path(&mut rng, n, dt, 1.5);
    let gain = ou_path(&mut rng, n, dt, 6.0);
    let start_phase: f64 = rng.random_range(0.0..TAU);
    let drift_phase: [f64; CHANNELS] = std::array::from_fn(|_| rng.random_range(0.0..TAU));
    let drift_period: f64 = rng.random_range(40.0..80.0);

    let mut out = vec![0.0; n * CHANNELS];
    let mut phi = start_phase;
    for i in 0..n {
        let t = i as f64 * dt;
        phi += TAU * cfg.wheel_frequency * (1.0 + 0.08 * speed[i]) * dt;
        let g = 1.0 + 0.1 * gain[i];
        for c in 0..CHANNELS {
            let a = CHANNEL_AMPLITUDE[c];
            let und = (phi + VEHICLE_PHASE[c]).sin() + 0.35 * (2.0 * phi + VEHICLE_PHASE2[c]).sin();
            let drift = 0.3 * a * (TAU * t / drift_period + drift_phase[c]).sin();
            let noise: f64 = StandardNormal.sample(&mut rng);
            out[i * CHANNELS + c] = a * g * und + drift + cfg.noise_sigma[c] * noise;
        }
        out[i * CHANNELS + 2] += GRAVITY;
    }
    out
}

fn inject(cfg: &SynthConfig, values: &mut [f64]) {
    let a = CHANNEL_AMPLITUDE;
    for (t, iv) in cfg.transients.iter().zip(cfg.intervals()) {
        let len = (iv.end - iv.start + 1) as f64;
        for i in iv.start..=iv.end.min(values.len() / CHANNELS - 1) {
            let u = (i - iv.start) as f64 / len;
            let row = &mut values[i * CHANNELS..(i + 1) * CHANNELS];
            match t.kind {
                TransientKind::TipOver => {
                    // abrupt onset, growing roll rate, relaxes over the last quarter
                    let envelope = if u < 0.75 { 1.0 } else { (1.0 - u) / 0.25 };
                    row[3] += t.amplitude * a[3] * (0.6 + 0.8 * u) * envelope;
                    row[1] += t.amplitude * a[1] * envelope;
                    row[2] -= 0.8 * t.amplitude * a[2] * envelope;
                }
                TransientKind::Slip => {
                    let hann = 0.5 - 0.5 * (TAU * u).cos();
                    let osc = (TAU * 12.0 * i as f64 / cfg.rate).sin();
                    row[0] += t.amplitude * a[0] * hann * osc;
                    row[1] += t.amplitude * a[1] * hann * (osc + 0.5);
                }
            }
        }
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<(MultivariateSeries, GroundTruth), SynthError> {
    cfg.validate()?;
    let mut values = baseline(cfg);
    inject(cfg, &mut values);
    let series = MultivariateSeries::from_matrix(&values, cfg.rate, cfg.behavior())
        .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let mut intervals = cfg.intervals();
    intervals.sort_by_key(|i| i.start);
    Ok((series, GroundTruth { intervals }))
}

/// A generated trial with its identity.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTrial {
    pub trial_id: String,
    pub config: SynthConfig,
    pub series: MultivariateSeries,
    pub truth: GroundTruth,
}

pub const PRESETS: [&str; 2] = ["smoke", "paper-analog"];

/// Config list for a named corpus.
pub fn preset_configs(name: &str, seed: u64) -> Result<Vec<SynthConfig>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0xC0_4905));
    let mut jitter = |cfg: SynthConfig, i: usize| SynthConfig {
        wheel_frequency: cfg.wheel_frequency * rng.random_range(0.95..1.05),
        seed: mix(seed, i as u64),
        ..cfg
    };
    match name {
        "smoke" => Ok(vec![
            jitter(SynthConfig::new(3.0, 0), 0),
            jitter(SynthConfig::new(3.0, 0).with_transient(TransientKind::TipOver, 1.5, 0.8, 4.0), 1),
            jitter(SynthConfig::new(3.0, 0).with_transient(TransientKind::Slip, 1.2, 0.6, 3.0), 2),
        ]),
        "paper-analog" => {
            // 10 trials × 250 s at 100 Hz: 7 normal, 2 tip-over, 1 slip
            let duration = 250.0;
            let mut out = Vec::new();
            for i in 0..10 {
                let mut cfg = jitter(SynthConfig::new(duration, 0), i);
                match i {
                    7 | 8 => {
                        for k in 0..3 {
                            let start = 40.0 + 70.0 * k as f64 + 10.0 * (i - 7) as f64;
                            cfg = cfg.with_transient(TransientKind::TipOver, start, 1.5, 4.0);
                        }
                    }
                    9 => {
                        for k in 0..2 {
                            cfg = cfg.with_transient(TransientKind::Slip, 60.0 + 100.0 * k as f64, 0.6, 3.0);
                        }
                    }
                    _ => {}
                }
                out.push(cfg);
            }
            Ok(out)
        }
        other => Err(SynthError::UnknownPreset(other.to_string())),
    }
}

pub fn corpus(name: &str, seed: u64) -> Result<Vec<SynthTrial>, SynthError> {
    preset_configs(name, seed)?
        .into_iter()
        .enumerate()
        .map(|(i, config)| {
            let (series, truth) = generate(&config)?;
            Ok(SynthTrial {
                trial_id: format!("trial_{i:02}"),
                config,
                series,
                truth,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_signal_peaks_at_wheel_frequency() {
        let mut cfg = SynthConfig::new(20.48, 4);
        cfg.noise_sigma = [0.0; CHANNELS];
        let (series, truth) = generate(&cfg).unwrap();
        assert!(truth.intervals.is_empty());
        assert_eq!(series.annotation, Behavior::Normal);
        // DFT magnitude scan of accel_x over 0.5..6 Hz
        let x: Vec<f64> = series.samples().iter().map(|s| s.values[0]).collect();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let power = |f: f64| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                let w = TAU * f * i as f64 / cfg.rate;
                re += (v - mean) * w.cos();
                im += (v - mean) * w.sin();
            }
            re * re + im * im
        };
        let freqs: Vec<f64> = (10..=120).map(|k| k as f64 * 0.05).collect();
        let peak = freqs
            .iter()
            .copied()
            .max_by(|a, b| power(*a).total_cmp(&power(*b)))
            .unwrap();
        assert!((peak - cfg.wheel_frequency).abs() <= 0.25, "peak at {peak} Hz");
    }

    #[test]
    fn tip_over_interval_index() {
        let cfg = SynthConfig::new(60.0, 1).with_transient(TransientKind::TipOver, 30.0, 1.5, 4.0);
        let (series, truth) = generate(&cfg).unwrap();
        assert_eq!(series.len(), 6000);
        assert_eq!(series.annotation, Behavior::TipOverRisk);
        assert_eq!(truth.intervals.len(), 1);
        assert_eq!(truth.intervals[0].start, 3000);
        assert_eq!(truth.intervals[0].end, 3149);

        let mut fast = cfg.clone();
        fast.rate = 200.0;
        let (_, truth) = generate(&fast).unwrap();
        assert_eq!(truth.intervals[0].start, 3000 * 2);
    }

    #[test]
    fn config_validation() {
        let base = SynthConfig::new(10.0, 1);
        assert!(generate(&base.clone().with_transient(TransientKind::Slip, 9.5, 1.0, 1.0)).is_err());
        assert!(generate(&base.clone().with_transient(TransientKind::Slip, 1.0, 1.0, 0.0)).is_err());
        assert!(generate(
            &base
                .clone()
                .with_transient(TransientKind::Slip, 1.0, 1.0, 1.0)
                .with_transient(TransientKind::TipOver, 1.5, 1.0, 1.0)
        )
        .is_err());
        let mut zero_rate = base.clone();
        zero_rate.rate = 0.0;
        assert!(generate(&zero_rate).is_err());
    }

    #[test]
    fn generation_is_pure() {
        let cfg = SynthConfig::new(5.0, 8).with_transient(TransientKind::Slip, 2.0, 0.5, 3.0);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig { seed: 9, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn transients_raise_short_window_energy() {
        for kind in [TransientKind::TipOver, TransientKind::Slip] {
            let cfg = SynthConfig::new(30.0, 21).with_transient(kind, 15.0, 1.0, 3.0);
            let (series, truth) = generate(&cfg).unwrap();
            let iv = truth.intervals[0];
            let len = iv.end - iv.start + 1;
            let values = series.to_matrix();
            let n = series.len();
            // mean square deviation from the trial-wide channel mean
            let energy = |c: usize, from: usize| {
                let m = (0..n).map(|i| values[i * CHANNELS + c]).sum::<f64>() / n as f64;
                (from..from + len)
                    .map(|i| (values[i * CHANNELS + c] - m).powi(2))
                    .sum::<f64>()
                    / len as f64
            };
            for &c in affected_channels(kind) {
                let inside = energy(c, iv.start);
                for from in [iv.start - 3 * len, iv.start - len, iv.end + 1, iv.end + 1 + 2 * len] {
                    let outside = energy(c, from);
                    assert!(inside > outside, "{kind:?} channel {c}: {inside} <= {outside}");
                }
            }
        }
    }

    #[test]
    fn normal_segments_are_stationary() {
        let (series, _) = generate(&SynthConfig::new(120.0, 5)).unwrap();
        let values = series.to_matrix();
        let n = series.len();
        for c in 0..CHANNELS {
            let col: Vec<f64> = (0..n).map(|i| values[i * CHANNELS + c]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            for w in col.chunks(500) {
                let wm = w.iter().sum::<f64>() / w.len() as f64;
                assert!((wm - mean).abs() < 3.0 * sd, "channel {c}");
            }
        }
    }

    #[test]
    fn presets() {
        let smoke = corpus("smoke", 1).unwrap();
        assert_eq!(smoke.len(), 3);
        let total: usize = smoke.iter().map(|t| t.series.len()).sum();
        assert!((total as f64) / 100.0 < 10.0);
        assert_eq!(smoke, corpus("smoke", 1).unwrap());
        assert!(matches!(corpus("nope", 1), Err(SynthError::UnknownPreset(_))));

        let analog = preset_configs("paper-analog", 1).unwrap();
        assert_eq!(analog.len(), 10);
        let total: usize = analog.iter().map(SynthConfig::sample_count).sum();
        assert_eq!(total, 250_000);
        let kinds: Vec<Behavior> = analog.iter().map(SynthConfig::behavior).collect();
        assert_eq!(kinds.iter().filter(|b| **b == Behavior::Normal).count(), 7);
        assert_eq!(kinds.iter().filter(|b| **b == Behavior::TipOverRisk).count(), 2);
        assert_eq!(kinds.iter().filter(|b| **b == Behavior::Slip).count(), 1);
        for cfg in &analog {
            cfg.validate().unwrap();
        }
    }
}
