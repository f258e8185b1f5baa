use serde::{Deserialize, Serialize};
use serde_json::json;
use tipguard_core::autoencoder::{build, train, Checkpoint, TrainConfig, TrainReport};
use tipguard_core::timeseries::{fit_normalizer, make_windows, split_trials, MultivariateSeries, WindowSpec, WindowedDataset};

use crate::config::{require_path, Params, RunConfig, TrainParams};
use crate::data::{load_dir, write_json, Trial};
use crate::{heldout_sets, CliError};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub run_config: RunConfig,
    pub report: TrainReport,
    pub param_count: usize,
    pub train_trials: Vec<String>,
    pub test_trials: Vec<String>,
    /// Test trials, every window.
    pub r2_test: Option<f64>,
    /// Test trials, windows clear of labelled transients.
    pub r2_test_clean: Option<f64>,
    pub test_windows: usize,
    pub test_clean_windows: usize,
}

pub fn run(p: &TrainParams) -> Result<TrainSummary, CliError> {
    require_path(&p.data, "--data")?;
    require_path(&p.out, "--out")?;
    p.spec.spec.validate()?;
    let rc = RunConfig::new(Params::Train(p.clone()));
    let trials = load_dir(&p.data)?;
    let window = WindowSpec::new(p.spec.spec.input_len, p.spec.spec.output_len, p.spec.step)?;

    let series: Vec<MultivariateSeries> = trials.iter().map(|t| t.series.clone()).collect();
    let split = split_trials(&series, p.train_frac, p.seed)?;
    let train_set: Vec<&Trial> = split.train.iter().map(|&i| &trials[i]).collect();
    let test_set: Vec<&Trial> = split.test.iter().map(|&i| &trials[i]).collect();
    let train_series: Vec<MultivariateSeries> = train_set.iter().map(|t| t.series.clone()).collect();
    let norm = fit_normalizer(&train_series)?;

    let mut ds = WindowedDataset::empty(window.input_len, window.output_len);
    for s in &train_series {
        ds.extend(&make_windows(&norm.apply(s), window));
    }
    if ds.is_empty() {
        return Err(CliError::Data(format!(
            "training trials are shorter than one window ({} samples)",
            window.span()
        )));
    }
    log::info!("training on {} windows from {} trials", ds.len(), train_set.len());

    let mut model = build(&p.spec.spec, p.seed)?;
    model.normalizer = Some(norm.clone());
    let report = train(&mut model, &ds, &TrainConfig::new(p.budget, p.seed))?;

    let (full, clean) = heldout_sets(&test_set, &norm, window);
    let r2 = |d: &WindowedDataset| match model.evaluate_r2(d) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("held-out r2 unavailable: {e}");
            None
        }
    };
    let summary = TrainSummary {
        run_config: rc.clone(),
        param_count: model.net.param_count(),
        train_trials: train_set.iter().map(|t| t.id.clone()).collect(),
        test_trials: test_set.iter().map(|t| t.id.clone()).collect(),
        r2_test: r2(&full),
        r2_test_clean: r2(&clean),
        test_windows: full.len(),
        test_clean_windows: clean.len(),
        report,
    };
    let metadata = json!({
        "run_config": rc.to_value(),
        "train_trials": summary.train_trials,
        "test_trials": summary.test_trials,
    });
    write_json(&p.out.join(CHECKPOINT_FILE), &Checkpoint::from_model(&model, Some(window), metadata))?;
    write_json(&p.out.join(TRAIN_REPORT_FILE), &summary)?;
    Ok(summary)
}
