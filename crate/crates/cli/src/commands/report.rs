use std::fmt::Write as _;
use std::fs;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::detect::{DETECT_SUMMARY_FILE, EVENTS_FILE, LOSS_DISTRIBUTION_FILE};
use super::train::{CHECKPOINT_FILE, TRAIN_REPORT_FILE};
use super::tune::TUNE_RESULT_FILE;
use crate::config::{read_json, require_path, Params, ReportParams, RunConfig};
use crate::data::write_json;
use crate::CliError;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";

const REQUIRED: [&str; 5] = [
    TRAIN_REPORT_FILE,
    CHECKPOINT_FILE,
    DETECT_SUMMARY_FILE,
    EVENTS_FILE,
    LOSS_DISTRIBUTION_FILE,
];

fn fmt_opt(v: &Value) -> String {
    v.as_f64().map_or("n/a".into(), |x| format!("{x:.4}"))
}

pub fn run(p: &ReportParams) -> Result<Value, CliError> {
    require_path(&p.out, "--out")?;
    let rc = RunConfig::new(Params::Report(p.clone()));
    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|f| !p.out.join(f).exists()).collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!(
            "{} is missing run artifacts: {}",
            p.out.display(),
            missing.join(", ")
        )));
    }
    let train: Value = read_json(&p.out.join(TRAIN_REPORT_FILE))?;
    let detect: Value = read_json(&p.out.join(DETECT_SUMMARY_FILE))?;
    let dist: Value = read_json(&p.out.join(LOSS_DISTRIBUTION_FILE))?;
    let tune: Option<Value> = p
        .out
        .join(TUNE_RESULT_FILE)
        .exists()
        .then(|| read_json(&p.out.join(TUNE_RESULT_FILE)))
        .transpose()?;

    let mut timelines = serde_json::Map::new();
    for (n, line) in fs::read_to_string(p.out.join(EVENTS_FILE))?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: Value = serde_json::from_str(line)
            .map_err(|err| CliError::Data(format!("{EVENTS_FILE} line {}: {err}", n + 1)))?;
        let id = e["trial_id"].as_str().unwrap_or("?").to_string();
        let entry = timelines.entry(id).or_insert_with(|| json!([]));
        entry.as_array_mut().expect("array").push(json!({
            "start_ts": e["start_ts"],
            "end_ts": e["end_ts"],
            "channels": e["channels"],
        }));
    }

    let mut artifacts = serde_json::Map::new();
    let mut names: Vec<&str> = REQUIRED.to_vec();
    if tune.is_some() {
        names.push(TUNE_RESULT_FILE);
    }
    names.sort_unstable();
    for name in names {
        let digest = Sha256::digest(fs::read(p.out.join(name))?);
        artifacts.insert(name.to_string(), Value::from(hex::encode(digest)));
    }

    let r2 = json!({
        "spec": train["run_config"]["spec"],
        "r2_test": train["r2_test"],
        "r2_test_clean": train["r2_test_clean"],
        "test_windows": train["test_windows"],
        "test_clean_windows": train["test_clean_windows"],
        "final_train_loss": train["report"]["final_train_loss"],
        "final_val_loss": train["report"]["final_val_loss"],
        "epochs": train["report"]["epochs_run"],
    });
    let report = json!({
        "run_config": rc.to_value(),
        "r2": r2,
        "loss_quantiles": {
            "metric": dist["metric"],
            "samples_per_channel": dist["samples_per_channel"],
            "quantiles": dist["quantiles"],
            "thresholds": detect["thresholds"],
        },
        "events": {
            "totals": detect["totals"],
            "timelines": timelines,
        },
        "provenance": {
            "artifacts": artifacts,
            "train": train["run_config"],
            "detect": detect["run_config"],
            "tune": tune.as_ref().map(|t| t["run_config"].clone()),
        },
    });
    write_json(&p.out.join(REPORT_JSON), &report)?;
    fs::write(p.out.join(REPORT_MD), markdown(&report))?;
    Ok(report)
}

fn markdown(r: &Value) -> String {
    let mut md = String::from("# tipguard run report\n\n## Forecast quality (R²)\n\n");
    let r2 = &r["r2"];
    md.push_str("| spec | epochs | R² test | R² test (clean) | val loss |\n|---|---|---|---|---|\n");
    let _ = writeln!(
        md,
        "| {}→{} {} | {} | {} | {} | {} |",
        r2["spec"]["input_len"],
        r2["spec"]["output_len"],
        r2["spec"]["encoder_layer_sizes"],
        r2["epochs"],
        fmt_opt(&r2["r2_test"]),
        fmt_opt(&r2["r2_test_clean"]),
        fmt_opt(&r2["final_val_loss"]),
    );

    let lq = &r["loss_quantiles"];
    let _ = write!(
        md,
        "\n## Loss quantiles\n\nMetric `{}`, {} samples per channel.\n\n| q | accel_x | accel_y | accel_z | gyro_x | gyro_y | gyro_z |\n|---|---|---|---|---|---|---|\n",
        lq["metric"].as_str().unwrap_or("?"),
        lq["samples_per_channel"],
    );
    let row = |label: String, vals: &Value| {
        let cells: Vec<String> = vals
            .as_array()
            .map(|a| a.iter().map(fmt_opt).collect())
            .unwrap_or_default();
        format!("| {label} | {} |\n", cells.join(" | "))
    };
    for q in lq["quantiles"].as_array().into_iter().flatten() {
        md.push_str(&row(fmt_opt(&q[0]), &q[1]));
    }
    md.push_str(&row(
        format!("threshold ({})", lq["thresholds"]["source"].as_str().unwrap_or("?")),
        &lq["thresholds"]["values"],
    ));

    md.push_str("\n## Event timelines\n\n");
    let totals = &r["events"]["totals"];
    let _ = writeln!(
        md,
        "{} events; recall {}, precision {}, false positives per normal trial {}.\n",
        totals["events"],
        fmt_opt(&totals["recall"]),
        fmt_opt(&totals["precision"]),
        fmt_opt(&totals["false_positives_per_normal_trial"]),
    );
    if let Some(map) = r["events"]["timelines"].as_object() {
        for (trial, events) in map {
            let spans: Vec<String> = events
                .as_array()
                .into_iter()
                .flatten()
                .map(|e| {
                    format!(
                        "{:.2}–{:.2} s",
                        e["start_ts"].as_f64().unwrap_or(f64::NAN),
                        e["end_ts"].as_f64().unwrap_or(f64::NAN)
                    )
                })
                .collect();
            let _ = writeln!(md, "- `{trial}`: {}", spans.join(", "));
        }
    }

    md.push_str("\n## Provenance\n\n| artifact | sha256 |\n|---|---|\n");
    if let Some(map) = r["provenance"]["artifacts"].as_object() {
        for (name, digest) in map {
            let _ = writeln!(md, "| {name} | `{}` |", digest.as_str().unwrap_or(""));
        }
    }
    let _ = writeln!(
        md,
        "\nTraining seed {}, budget {} epochs; thresholds `{}`.",
        r["provenance"]["train"]["seed"],
        r["provenance"]["train"]["budget"],
        r["provenance"]["detect"]["thresholds"].as_str().unwrap_or("?"),
    );
    md
}
