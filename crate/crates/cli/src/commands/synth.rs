use serde_json::json;
use tipguard_core::synth::{corpus, generate, SynthTrial};
use tipguard_core::timeseries::Annotation;

use crate::config::{require_path, Params, RunConfig, SynthParams};
use crate::data::write_trial;
use crate::CliError;

pub fn run(p: &SynthParams) -> Result<serde_json::Value, CliError> {
    require_path(&p.out, "--out")?;
    let rc = RunConfig::new(Params::Synth(p.clone()));
    let trials: Vec<SynthTrial> = match &p.trials {
        Some(configs) => configs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let (series, truth) = generate(c)?;
                Ok(SynthTrial {
                    trial_id: format!("trial_{i:02}"),
                    config: c.clone(),
                    series,
                    truth,
                })
            })
            .collect::<Result<_, CliError>>()?,
        None => corpus(&p.preset, p.seed)?,
    };
    let mut manifest = Vec::new();
    for t in &trials {
        let mut extra = serde_json::Map::new();
        extra.insert("ground_truth".into(), serde_json::to_value(&t.truth)?);
        extra.insert("synth".into(), serde_json::to_value(&t.config)?);
        extra.insert("run_config".into(), rc.to_value());
        let ann = Annotation {
            trial_id: t.trial_id.clone(),
            behavior: t.config.behavior(),
            extra,
        };
        write_trial(&p.out, &ann, &t.series)?;
        manifest.push(json!({
            "trial_id": t.trial_id,
            "behavior": ann.behavior,
            "samples": t.series.len(),
            "intervals": t.truth.intervals.len(),
        }));
    }
    log::info!("wrote {} trials to {}", trials.len(), p.out.display());
    Ok(json!({"run_config": rc.to_value(), "trials": manifest}))
}
