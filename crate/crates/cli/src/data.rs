use std::fs;
use std::path::Path;

use tipguard_core::synth::GroundTruth;
use tipguard_core::timeseries::{ingest_csv, parse_annotation, write_csv, Annotation, Behavior, MultivariateSeries};

use crate::CliError;

/// A trial loaded from a data directory.
#[derive(Debug, Clone)]
pub struct Trial {
    pub id: String,
    pub series: MultivariateSeries,
    pub truth: Option<GroundTruth>,
}

impl Trial {
    pub fn behavior(&self) -> Behavior {
        self.series.annotation
    }
}

/// Loads every `<id>.csv` in `dir`, sorted by name, with its optional
/// `<id>.json` sidecar.
pub fn load_dir(dir: &Path) -> Result<Vec<Trial>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Data(format!("data directory {} not found", dir.display())));
    }
    let mut csvs: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();
    if csvs.is_empty() {
        return Err(CliError::Data(format!("no .csv trials in {}", dir.display())));
    }
    let mut out = Vec::with_capacity(csvs.len());
    for path in csvs {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let mut series = ingest_csv(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let sidecar = path.with_extension("json");
        let (id, truth) = if sidecar.exists() {
            let ann = parse_annotation(&fs::read(&sidecar)?)
                .map_err(|e| CliError::Data(format!("{}: {e}", sidecar.display())))?;
            series.annotation = ann.behavior;
            let truth = match ann.extra.get("ground_truth") {
                Some(v) => Some(
                    serde_json::from_value(v.clone())
                        .map_err(|e| CliError::Data(format!("{}: ground_truth: {e}", sidecar.display())))?,
                ),
                None => None,
            };
            (ann.trial_id, truth)
        } else {
            (stem, None)
        };
        out.push(Trial { id, series, truth });
    }
    Ok(out)
}

/// Writes `<id>.csv` and its sidecar.
pub fn write_trial(dir: &Path, annotation: &Annotation, series: &MultivariateSeries) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let csv = fs::File::create(dir.join(format!("{}.csv", annotation.trial_id)))?;
    write_csv(series, csv)?;
    let mut json = serde_json::to_vec_pretty(annotation)?;
    json.push(b'\n');
    fs::write(dir.join(format!("{}.json", annotation.trial_id)), json)?;
    Ok(())
}

/// Writes pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}
