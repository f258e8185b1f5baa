//! BOHB: Hyperband brackets whose new configurations come from a TPE model.

mod kde;
mod schedule;
mod space;

pub use kde::{split_counts, tpe_fit, tpe_sample, tpe_sample_excluding, Kde, KdeModel, DENSITY_FLOOR, MIN_BANDWIDTH};
pub use schedule::{hyperband_brackets, preset_20_100, sh_schedule, Rung, ShSchedule};
pub use space::{Config, ConfigSpace, Dimension};

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seeding::{mix, mix3};

#[derive(Debug, thiserror::Error)]
pub enum BohbError {
    #[error("config space: {0}")]
    Space(String),
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("{found} observations, need at least {need}")]
    TooFewObservations { found: usize, need: usize },
    #[error("invalid search parameters: {0}")]
    Params(String),
    #[error("audit log: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BohbConfig {
    pub eta: f64,
    pub min_budget: f64,
    pub max_budget: f64,
    /// Number of brackets run; they cycle from most to least aggressive.
    pub iterations: usize,
    /// Fraction of configurations drawn uniformly at random.
    pub rho: f64,
    pub q: f64,
    pub n_samples: usize,
    pub bandwidth_factor: f64,
    /// Defaults to dimension count + 1.
    pub n_min: Option<usize>,
    pub seed: u64,
    pub workers: usize,
}

impl Default for BohbConfig {
    fn default() -> Self {
        Self {
            eta: 3.0,
            min_budget: 1.0,
            max_budget: 27.0,
            iterations: 4,
            rho: 1.0 / 3.0,
            q: 0.15,
            n_samples: 64,
            bandwidth_factor: 3.0,
            n_min: None,
            seed: 0,
            workers: 1,
        }
    }
}

impl BohbConfig {
    /// 20→100 epochs in three rungs.
    pub fn protocol_20_100() -> Self {
        Self {
            eta: 5f64.sqrt(),
            min_budget: 20.0,
            max_budget: 100.0,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), BohbError> {
        let bad = |m: String| Err(BohbError::Params(m));
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho {} outside [0, 1]", self.rho));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad(format!("q {} outside (0, 1)", self.q));
        }
        if self.n_samples == 0 || self.workers == 0 || self.iterations == 0 {
            return bad("n_samples, workers and iterations must be positive".into());
        }
        if !(self.bandwidth_factor > 0.0 && self.bandwidth_factor.is_finite()) {
            return bad("bandwidth factor must be positive".into());
        }
        sh_schedule(1, self.eta, self.min_budget, self.max_budget)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub config: Config,
    /// `+inf` when the objective failed.
    pub loss: f64,
    pub budget: usize,
    pub bracket: usize,
    pub rung: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BohbResult {
    pub incumbent: Option<Observation>,
    pub observations: Vec<Observation>,
    /// Every configuration in the order it was proposed.
    pub proposals: Vec<Config>,
    pub unique_configs: usize,
    pub full_budget_evals: usize,
    /// Times a fitted TPE model was used to propose a configuration.
    pub kde_consultations: usize,
}

#[derive(Serialize)]
struct AuditLine<'a> {
    config: serde_json::Value,
    loss: Option<f64>,
    budget: usize,
    wall_time_s: f64,
    bracket: usize,
    rung: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

/// Model from the largest budget that has enough observations.
fn fit_model(space: &ConfigSpace, obs: &[Observation], cfg: &BohbConfig, n_min: usize) -> Option<KdeModel> {
    let budgets: BTreeSet<usize> = obs.iter().map(|o| o.budget).collect();
    budgets.into_iter().rev().find_map(|b| {
        let at: Vec<(Config, f64)> = obs
            .iter()
            .filter(|o| o.budget == b)
            .map(|o| (o.config.clone(), o.loss))
            .collect();
        tpe_fit(space, &at, cfg.q, n_min).ok()
    })
}

/// Runs BOHB. `objective(config, budget, seed)` must be deterministic in its
/// arguments; errors are recorded as infinite loss.
pub fn bohb_run<F>(
    space: &ConfigSpace,
    objective: F,
    cfg: &BohbConfig,
    mut audit: Option<&mut dyn Write>,
) -> Result<BohbResult, BohbError>
where
    F: Fn(&Config, usize, u64) -> Result<f64, String> + Sync,
{
    space.validate()?;
    cfg.validate()?;
    let n_min = cfg.n_min.unwrap_or(space.dim() + 1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| BohbError::Params(e.to_string()))?;
    let brackets = hyperband_brackets(cfg.eta, cfg.min_budget, cfg.max_budget);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0xB0B));
    let mut observations: Vec<Observation> = Vec::new();
    let mut proposals: Vec<Config> = Vec::new();
    let mut kde_consultations = 0;

    for it in 0..cfg.iterations {
        let (s, n) = brackets[it % brackets.len()];
        let bracket_min = cfg.max_budget / cfg.eta.powi(s as i32);
        let schedule = sh_schedule(n, cfg.eta, bracket_min, cfg.max_budget)?;
        log::info!("bracket {it}: {:?}", schedule.rungs);

        let mut live: Vec<(usize, Config)> = Vec::with_capacity(n);
        for _ in 0..n {
            let draw: f64 = rng.random();
            let model = if draw < cfg.rho {
                None
            } else {
                fit_model(space, &observations, cfg, n_min)
            };
            let c = match model {
                Some(m) => {
                    kde_consultations += 1;
                    let seen: BTreeSet<Config> = proposals.iter().cloned().collect();
                    tpe_sample_excluding(space, &m, cfg.n_samples, cfg.bandwidth_factor, &seen, &mut rng)
                }
                None => space.sample_uniform(&mut rng),
            };
            live.push((proposals.len(), c.clone()));
            proposals.push(c);
        }

        for (r, rung) in schedule.rungs.iter().enumerate() {
            live.truncate(rung.n_configs);
            let results: Vec<(Result<f64, String>, f64)> = pool.install(|| {
                live.par_iter()
                    .map(|(id, c)| {
                        let t = Instant::now();
                        let seed = mix3(cfg.seed, *id as u64, rung.budget as u64);
                        let out = objective(c, rung.budget, seed);
                        (out, t.elapsed().as_secs_f64())
                    })
                    .collect()
            });
            let mut scored = Vec::with_capacity(live.len());
            for ((id, c), (out, wall)) in live.iter().zip(results) {
                let (loss, err) = match out {
                    Ok(v) if !v.is_nan() => (v, None),
                    Ok(_) => (f64::INFINITY, Some("objective returned NaN".to_string())),
                    Err(e) => (f64::INFINITY, Some(e)),
                };
                if let Some(e) = &err {
                    log::warn!("config {:?} at budget {}: {e}", c.0, rung.budget);
                }
                if let Some(w) = audit.as_deref_mut() {
                    serde_json::to_writer(
                        &mut *w,
                        &AuditLine {
                            config: space.to_json(c),
                            loss: loss.is_finite().then_some(loss),
                            budget: rung.budget,
                            wall_time_s: wall,
                            bracket: it,
                            rung: r,
                            error: err.as_deref(),
                        },
                    )
                    .map_err(std::io::Error::from)?;
                    w.write_all(b"\n")?;
                }
                observations.push(Observation {
                    config: c.clone(),
                    loss,
                    budget: rung.budget,
                    bracket: it,
                    rung: r,
                    wall_time_s: wall,
                });
                scored.push((loss, *id, c.clone()));
            }
            // stable: ties keep proposal order
            scored.sort_by(|a, b| a.0.total_cmp(&b.0));
            live = scored.into_iter().map(|(_, id, c)| (id, c)).collect();
        }
    }

    let top = observations.iter().map(|o| o.budget).max().unwrap_or(0);
    let incumbent = observations
        .iter()
        .filter(|o| o.budget == top)
        .fold(None::<&Observation>, |best, o| match best {
            Some(b) if b.loss <= o.loss => Some(b),
            _ => Some(o),
        })
        .cloned();
    let unique_configs = proposals.iter().collect::<BTreeSet<_>>().len();
    let full_budget_evals = observations.iter().filter(|o| o.budget == top).count();
    Ok(BohbResult {
        incumbent,
        observations,
        proposals,
        unique_configs,
        full_budget_evals,
        kde_consultations,
    })
}

/// Uniform random search with the same per-config seeding, every
/// configuration evaluated at `budget`.
pub fn random_search<F>(
    space: &ConfigSpace,
    objective: F,
    evaluations: usize,
    budget: usize,
    seed: u64,
) -> Vec<Observation>
where
    F: Fn(&Config, usize, u64) -> Result<f64, String>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x5A5A));
    (0..evaluations)
        .map(|id| {
            let c = space.sample_uniform(&mut rng);
            let t = Instant::now();
            let loss = objective(&c, budget, mix3(seed, id as u64, budget as u64))
                .ok()
                .filter(|v| !v.is_nan())
                .unwrap_or(f64::INFINITY);
            Observation {
                config: c,
                loss,
                budget,
                bracket: 0,
                rung: 0,
                wall_time_s: t.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

/// Sum of budgets over all observations.
pub fn total_budget(obs: &[Observation]) -> usize {
    obs.iter().map(|o| o.budget).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted(c: &Config, budget: usize, seed: u64) -> Result<f64, String> {
        let (a, b) = (c.0[0] as f64, c.0[1] as f64);
        let noise = (mix(seed, 1) % 1000) as f64 / 1000.0;
        Ok(((a - 19.0).powi(2) + (b - 37.0).powi(2)) / 100.0 + (1.0 + noise) / budget as f64)
    }

    fn space2() -> ConfigSpace {
        ConfigSpace::layer_sizes(2, 4, 64).unwrap()
    }

    #[test]
    fn rho_one_never_consults_model() {
        let cfg = BohbConfig {
            rho: 1.0,
            iterations: 8,
            seed: 3,
            ..BohbConfig::default()
        };
        let r = bohb_run(&space2(), planted, &cfg, None).unwrap();
        assert_eq!(r.kde_consultations, 0);
        let cfg = BohbConfig { rho: 0.0, ..cfg };
        assert!(bohb_run(&space2(), planted, &cfg, None).unwrap().kde_consultations > 0);
    }

    #[test]
    fn identical_seed_identical_proposals() {
        let cfg = BohbConfig {
            iterations: 6,
            seed: 9,
            ..BohbConfig::default()
        };
        let a = bohb_run(&space2(), planted, &cfg, None).unwrap();
        let b = bohb_run(&space2(), planted, &cfg, None).unwrap();
        assert_eq!(a.proposals, b.proposals);
        assert_eq!(a.observations.len(), b.observations.len());
        let parallel = BohbConfig { workers: 3, ..cfg };
        let c = bohb_run(&space2(), planted, &parallel, None).unwrap();
        assert_eq!(a.proposals, c.proposals);
        let losses = |r: &BohbResult| r.observations.iter().map(|o| o.loss).collect::<Vec<_>>();
        assert_eq!(losses(&a), losses(&c));
    }

    #[test]
    fn constant_objective_keeps_first_full_budget_config() {
        let cfg = BohbConfig {
            iterations: 4,
            ..BohbConfig::default()
        };
        let r = bohb_run(&space2(), |_, _, _| Ok(1.0), &cfg, None).unwrap();
        let first = r.observations.iter().find(|o| o.budget == 27).unwrap();
        assert_eq!(r.incumbent.as_ref().unwrap(), first);
    }

    #[test]
    fn failures_score_infinity_and_search_continues() {
        let cfg = BohbConfig {
            iterations: 4,
            ..BohbConfig::default()
        };
        let flaky = |c: &Config, b: usize, s: u64| {
            if c.0[0] % 2 == 0 {
                Err("diverged".to_string())
            } else {
                planted(c, b, s)
            }
        };
        let mut log = Vec::new();
        let r = bohb_run(&space2(), flaky, &cfg, Some(&mut log)).unwrap();
        assert!(r.observations.iter().any(|o| o.loss.is_infinite()));
        assert!(r.incumbent.unwrap().loss.is_finite());
        let text = String::from_utf8(log).unwrap();
        assert_eq!(text.lines().count(), r.observations.len());
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["config", "loss", "budget", "wall_time_s", "rung"] {
            assert!(first.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn counts_are_reported() {
        let cfg = BohbConfig {
            iterations: 54,
            ..BohbConfig::protocol_20_100()
        };
        let r = bohb_run(&space2(), planted, &cfg, None).unwrap();
        // brackets of 5, 4 and 3 configs; 1, 2 and 3 reach 100 epochs
        assert_eq!(r.proposals.len(), 216);
        assert_eq!(r.full_budget_evals, 108);
        assert!(r.unique_configs <= 216 && r.unique_configs > 0);
        assert!(r.observations.iter().all(|o| [20, 45, 100].contains(&o.budget)));
    }

    #[test]
    fn rejects_bad_parameters() {
        for cfg in [
            BohbConfig { rho: 1.5, ..BohbConfig::default() },
            BohbConfig { q: 0.0, ..BohbConfig::default() },
            BohbConfig { eta: 1.0, ..BohbConfig::default() },
            BohbConfig { workers: 0, ..BohbConfig::default() },
            BohbConfig { min_budget: 50.0, ..BohbConfig::default() },
        ] {
            assert!(bohb_run(&space2(), planted, &cfg, None).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn quadratic_1d_converges() {
        let space = ConfigSpace::layer_sizes(1, 4, 64).unwrap();
        let f = |c: &Config, _: usize, _: u64| Ok(20.0 + (c.0[0] as f64 - 37.0).powi(2));
        let cfg = |seed| BohbConfig {
            eta: 3.0,
            min_budget: 1.0,
            max_budget: 1.0,
            iterations: 50,
            seed,
            ..BohbConfig::default()
        };
        let mut bohb_best = Vec::new();
        let mut rs_best = Vec::new();
        for seed in 0..20 {
            let r = bohb_run(&space, f, &cfg(seed), None).unwrap();
            let best = r.incumbent.unwrap().loss;
            // within 5% of the minimum value 20
            assert!(best <= 21.0, "seed {seed}: {best}");
            bohb_best.push(best);
            let rs = random_search(&space, f, 50, 1, seed);
            rs_best.push(rs.iter().map(|o| o.loss).fold(f64::INFINITY, f64::min));
        }
        bohb_best.sort_by(f64::total_cmp);
        rs_best.sort_by(f64::total_cmp);
        assert!(bohb_best[10] <= rs_best[10]);
    }
}
