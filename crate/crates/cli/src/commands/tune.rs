use std::fs::File;
use std::io::BufWriter;

use serde_json::json;
use tipguard_core::autoencoder::{build, train, AutoencoderSpec, TrainConfig};
use tipguard_core::bohb::{bohb_run, BohbConfig, Config, ConfigSpace};
use tipguard_core::timeseries::{fit_normalizer, make_windows, split_trials, MultivariateSeries, WindowSpec, WindowedDataset};

use crate::config::{require_path, Params, RunConfig, ShPreset, SpecFile, TuneParams};
use crate::data::{load_dir, write_json};
use crate::CliError;

pub const AUDIT_FILE: &str = "audit.jsonl";
pub const TUNE_RESULT_FILE: &str = "tune_result.json";
pub const BEST_SPEC_FILE: &str = "best_spec.json";

pub fn bohb_config(p: &TuneParams) -> BohbConfig {
    let preset = match p.sh_preset {
        ShPreset::Long => BohbConfig::protocol_20_100(),
        ShPreset::Hyperband => BohbConfig::default(),
    };
    BohbConfig {
        eta: p.eta.unwrap_or(preset.eta),
        min_budget: p.min_budget.unwrap_or(preset.min_budget),
        max_budget: p.budget.unwrap_or(preset.max_budget),
        iterations: p.iterations,
        rho: p.rho,
        q: p.q,
        n_samples: p.n_samples,
        bandwidth_factor: p.bandwidth_factor,
        n_min: None,
        seed: p.seed,
        workers: p.workers,
    }
}

pub fn run(p: &TuneParams) -> Result<serde_json::Value, CliError> {
    require_path(&p.data, "--data")?;
    require_path(&p.out, "--out")?;
    let rc = RunConfig::new(Params::Tune(p.clone()));
    let space = match &p.space {
        Some(s) => {
            s.validate()?;
            s.clone()
        }
        None => ConfigSpace::layer_sizes(p.depth, 4, 64)?,
    };
    let cfg = bohb_config(p);
    let trials = load_dir(&p.data)?;
    let series: Vec<MultivariateSeries> = trials.iter().map(|t| t.series.clone()).collect();
    let split = split_trials(&series, p.train_frac, p.seed)?;
    let train_series: Vec<MultivariateSeries> = split.train.iter().map(|&i| series[i].clone()).collect();
    let norm = fit_normalizer(&train_series)?;
    let window = WindowSpec::new(p.spec.spec.input_len, p.spec.spec.output_len, p.spec.step)?;
    let mut ds = WindowedDataset::empty(window.input_len, window.output_len);
    for s in &train_series {
        ds.extend(&make_windows(&norm.apply(s), window));
    }
    if ds.is_empty() {
        return Err(CliError::Data("training trials are shorter than one window".into()));
    }

    let spec_for = |c: &Config| AutoencoderSpec {
        encoder_layer_sizes: space.integers(c),
        ..p.spec.spec.clone()
    };
    let objective = |c: &Config, budget: usize, seed: u64| -> Result<f64, String> {
        let mut model = build(&spec_for(c), seed).map_err(|e| e.to_string())?;
        model.normalizer = Some(norm.clone());
        let report = train(&mut model, &ds, &TrainConfig::new(budget, seed)).map_err(|e| e.to_string())?;
        Ok(report.final_val_loss)
    };

    std::fs::create_dir_all(&p.out)?;
    let mut audit = BufWriter::new(File::create(p.out.join(AUDIT_FILE))?);
    let result = bohb_run(&space, objective, &cfg, Some(&mut audit))?;
    drop(audit);

    let incumbent = result.incumbent.as_ref().filter(|o| o.loss.is_finite());
    if let Some(inc) = incumbent {
        let best = SpecFile {
            spec: spec_for(&inc.config),
            step: p.spec.step,
        };
        write_json(&p.out.join(BEST_SPEC_FILE), &best)?;
    }
    let summary = json!({
        "run_config": rc.to_value(),
        "bohb": cfg,
        "incumbent": incumbent.map(|o| json!({
            "config": space.to_json(&o.config),
            "loss": o.loss,
            "budget": o.budget,
        })),
        "evaluations": result.observations.len(),
        "unique_configs": result.unique_configs,
        "full_budget_evals": result.full_budget_evals,
        "kde_consultations": result.kde_consultations,
        "failed_evaluations": result.observations.iter().filter(|o| !o.loss.is_finite()).count(),
    });
    write_json(&p.out.join(TUNE_RESULT_FILE), &summary)?;
    if incumbent.is_none() {
        return Err(CliError::Numeric("every full-budget evaluation failed".into()));
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_then_overrides() {
        let mut p = TuneParams::default();
        let c = bohb_config(&p);
        assert_eq!((c.min_budget, c.max_budget), (20.0, 100.0));
        assert!((c.eta - 5f64.sqrt()).abs() < 1e-15);
        p.sh_preset = ShPreset::Hyperband;
        p.budget = Some(9.0);
        p.rho = 1.0;
        let c = bohb_config(&p);
        assert_eq!((c.eta, c.min_budget, c.max_budget, c.rho), (3.0, 1.0, 9.0, 1.0));
    }
}
