use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use serde_json::json;
use tipguard_core::autoencoder::Checkpoint;
use tipguard_core::detector::{
    detect, select_thresholds, series_errors, write_events_jsonl, write_plot_csv, AnomalyEvent, EventScore,
    LossDistribution, ThresholdSet,
};
use tipguard_core::timeseries::{Behavior, MultivariateSeries, WindowSpec};

use crate::config::{read_json, require_path, DetectParams, Params, RunConfig, ThresholdSource};
use crate::data::{load_dir, write_json};
use crate::CliError;

pub const EVENTS_FILE: &str = "events.jsonl";
pub const DETECT_SUMMARY_FILE: &str = "detect_summary.json";
pub const LOSS_DISTRIBUTION_FILE: &str = "loss_distribution.json";
pub const PLOTS_DIR: &str = "plots";

pub fn run(p: &DetectParams) -> Result<serde_json::Value, CliError> {
    require_path(&p.data, "--data")?;
    require_path(&p.out, "--out")?;
    if !(p.quantile > 0.0 && p.quantile < 1.0) {
        return Err(CliError::Usage(format!("--quantile {} outside (0, 1)", p.quantile)));
    }
    let rc = RunConfig::new(Params::Detect(p.clone()));
    let ck_path = p.checkpoint.clone().unwrap_or_else(|| p.out.join(super::train::CHECKPOINT_FILE));
    let ck: Checkpoint = read_json(&ck_path)?;
    let model = ck.to_model()?;
    let mut window = ck
        .window
        .unwrap_or(WindowSpec::new(model.spec.input_len, model.spec.output_len, 10)?);
    if let Some(s) = &p.spec {
        if s.spec.input_len != model.spec.input_len || s.spec.output_len != model.spec.output_len {
            return Err(CliError::Usage(format!(
                "spec mismatch: --spec asks for {}→{} windows, checkpoint was trained on {}→{}",
                s.spec.input_len, s.spec.output_len, model.spec.input_len, model.spec.output_len
            )));
        }
        window = WindowSpec::new(s.spec.input_len, s.spec.output_len, s.step)?;
    }
    let trials = load_dir(&p.data)?;

    let train_ids: Vec<String> = ck.metadata["train_trials"]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
        .unwrap_or_default();
    let fit_series: Vec<&MultivariateSeries> = trials
        .iter()
        .filter(|t| train_ids.contains(&t.id))
        .map(|t| &t.series)
        .collect();
    let distribution = if fit_series.is_empty() {
        None
    } else {
        let errors = series_errors(&model, &fit_series, 1, p.metric)?;
        Some(LossDistribution::fit(&errors, p.metric)?)
    };
    let thresholds = match p.thresholds {
        ThresholdSource::Table4 => ThresholdSet::table4(p.metric),
        ThresholdSource::Fit => {
            let dist = distribution.as_ref().ok_or_else(|| {
                CliError::Data(format!(
                    "--thresholds fit needs the checkpoint's training trials ({}) in {}",
                    train_ids.join(", "),
                    p.data.display()
                ))
            })?;
            select_thresholds(dist, p.quantile)?
        }
    };

    let plots: PathBuf = p.out.join(PLOTS_DIR);
    fs::create_dir_all(&plots)?;
    let mut events: Vec<AnomalyEvent> = Vec::new();
    let mut per_trial = Vec::new();
    let mut total = EventScore::default();
    let mut normal_trials = 0;
    let mut normal_fp = 0;
    for t in &trials {
        let det = detect(&model, &t.series, &thresholds, window, &t.id)?;
        write_plot_csv(&det, &thresholds, BufWriter::new(File::create(plots.join(format!("{}.csv", t.id)))?))?;
        let score = t.truth.as_ref().map(|g| tipguard_core::detector::score_events(&det, g));
        if let Some(s) = &score {
            total.add(s);
            if t.behavior() == Behavior::Normal {
                normal_trials += 1;
                normal_fp += s.false_positives;
            }
        }
        per_trial.push(json!({
            "trial_id": t.id,
            "behavior": t.behavior(),
            "windows": det.windows.len(),
            "flagged_windows": det.windows.iter().filter(|w| w.any()).count(),
            "events": det.events.len(),
            "score": score,
        }));
        events.extend(det.events);
    }
    write_events_jsonl(&events, BufWriter::new(File::create(p.out.join(EVENTS_FILE))?))?;
    if let Some(dist) = &distribution {
        write_json(
            &p.out.join(LOSS_DISTRIBUTION_FILE),
            &json!({
                "run_config": rc.to_value(),
                "metric": dist.metric,
                "samples_per_channel": dist.samples[0].len(),
                "quantiles": dist.quantiles,
            }),
        )?;
    }
    let summary = json!({
        "run_config": rc.to_value(),
        "checkpoint": ck_path,
        "window": window,
        "thresholds": thresholds,
        "trials": per_trial,
        "totals": {
            "events": events.len(),
            "score": total,
            "recall": total.recall(),
            "precision": total.precision(),
            "false_positives_per_normal_trial": (normal_trials > 0).then(|| normal_fp as f64 / normal_trials as f64),
        },
    });
    write_json(&p.out.join(DETECT_SUMMARY_FILE), &summary)?;
    Ok(summary)
}
