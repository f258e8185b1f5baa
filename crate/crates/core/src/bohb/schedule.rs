use serde::{Deserialize, Serialize};

use super::BohbError;

const LOG_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub n_configs: usize,
    /// Whole epochs.
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShSchedule {
    pub eta: f64,
    pub min_budget: f64,
    pub max_budget: f64,
    pub rungs: Vec<Rung>,
}

fn floor_log(x: f64, eta: f64) -> usize {
    ((x.ln() / eta.ln()) + LOG_EPS).floor().max(0.0) as usize
}

/// Successive-halving ladder for `n` configurations. The top rung always runs
/// at `max_budget`; lower rungs divide it by η until either the minimum budget
/// or the configuration count runs out.
pub fn sh_schedule(n: usize, eta: f64, min_budget: f64, max_budget: f64) -> Result<ShSchedule, BohbError> {
    if !(eta > 1.0 && eta.is_finite()) {
        return Err(BohbError::Schedule(format!("eta {eta} must exceed 1")));
    }
    if !(min_budget > 0.0 && min_budget <= max_budget && max_budget.is_finite()) {
        return Err(BohbError::Schedule(format!(
            "budgets must satisfy 0 < min ({min_budget}) <= max ({max_budget})"
        )));
    }
    if n == 0 {
        return Err(BohbError::Schedule("need at least one configuration".into()));
    }
    let count = 1 + floor_log(max_budget / min_budget, eta).min(floor_log(n as f64, eta));
    let rungs = (0..count)
        .map(|i| {
            let scale = eta.powi(i as i32);
            Rung {
                n_configs: ((n as f64 / scale) - LOG_EPS).ceil().max(1.0) as usize,
                budget: (max_budget / eta.powi((count - 1 - i) as i32)).round().max(1.0) as usize,
            }
        })
        .collect();
    Ok(ShSchedule {
        eta,
        min_budget,
        max_budget,
        rungs,
    })
}

/// 20→100 epochs over three rungs, η = √5.
pub fn preset_20_100(n: usize) -> Result<ShSchedule, BohbError> {
    sh_schedule(n, 5f64.sqrt(), 20.0, 100.0)
}

/// Hyperband bracket sizes: (s, n) for s = s_max down to 0.
pub fn hyperband_brackets(eta: f64, min_budget: f64, max_budget: f64) -> Vec<(usize, usize)> {
    let s_max = floor_log(max_budget / min_budget, eta);
    (0..=s_max)
        .rev()
        .map(|s| {
            let n = ((s_max + 1) as f64 / (s + 1) as f64 * eta.powi(s as i32) - LOG_EPS).ceil() as usize;
            (s, n.max(1))
        })
        .collect()
}
