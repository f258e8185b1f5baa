use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::space::{Config, ConfigSpace, Dimension};
use super::BohbError;

pub const MIN_BANDWIDTH: f64 = 1e-3;
pub const DENSITY_FLOOR: f64 = 1e-32;

/// Good/bad set sizes for `n_b` observations: the good set takes the top
/// `q` fraction, the bad set the rest, each floored at `n_min`. The sets
/// overlap when both floors bind.
pub fn split_counts(n_b: usize, q: f64, n_min: usize) -> (usize, usize) {
    let n_l = n_min.max((q * n_b as f64 + 1e-9).floor() as usize);
    let n_g = n_min.max(n_b.saturating_sub(n_l));
    (n_l, n_g)
}

/// Product-Gaussian KDE over unit-scaled integer dimensions, times
/// Laplace-smoothed frequency tables for categorical ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    /// Unit coordinates of each point on the continuous dimensions.
    pub points: Vec<Vec<f64>>,
    pub bandwidths: Vec<f64>,
    /// Per categorical dimension, probability of each choice.
    pub tables: Vec<Vec<f64>>,
}

impl Kde {
    pub fn fit(space: &ConfigSpace, configs: &[&Config]) -> Self {
        let cont = space.continuous_dims();
        let points: Vec<Vec<f64>> = configs
            .iter()
            .map(|c| cont.iter().map(|&d| space.to_unit(d, c.0[d])).collect())
            .collect();
        let n = points.len().max(1) as f64;
        let factor = n.powf(-1.0 / (cont.len() as f64 + 4.0));
        let bandwidths = cont
            .iter()
            .enumerate()
            .map(|(j, &d)| {
                let mean = points.iter().map(|p| p[j]).sum::<f64>() / n;
                let var = points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / n;
                // below half a grid step every draw rounds back to the same integer
                let grid = match &space.dimensions[d] {
                    Dimension::Integer { low, high, .. } if high > low => 0.5 / (high - low) as f64,
                    _ => 0.0,
                };
                (factor * var.sqrt()).max(MIN_BANDWIDTH).max(grid)
            })
            .collect();
        let tables = space
            .categorical_dims()
            .into_iter()
            .map(|d| {
                let k = match &space.dimensions[d] {
                    Dimension::Categorical { choices, .. } => choices.len(),
                    Dimension::Integer { .. } => unreachable!(),
                };
                let mut counts = vec![1.0; k];
                for c in configs {
                    counts[c.0[d] as usize] += 1.0;
                }
                let total: f64 = counts.iter().sum();
                counts.into_iter().map(|v| v / total).collect()
            })
            .collect();
        Self {
            points,
            bandwidths,
            tables,
        }
    }

    pub fn pdf(&self, space: &ConfigSpace, config: &Config) -> f64 {
        self.pdf_scaled(space, config, 1.0)
    }

    fn pdf_scaled(&self, space: &ConfigSpace, config: &Config, factor: f64) -> f64 {
        let cont = space.continuous_dims();
        let x: Vec<f64> = cont.iter().map(|&d| space.to_unit(d, config.0[d])).collect();
        let norm: f64 = self
            .bandwidths
            .iter()
            .map(|bw| 1.0 / (bw * factor * (2.0 * std::f64::consts::PI).sqrt()))
            .product();
        let mix = if cont.is_empty() {
            1.0
        } else {
            self.points
                .iter()
                .map(|p| {
                    let e: f64 = p
                        .iter()
                        .zip(&x)
                        .zip(&self.bandwidths)
                        .map(|((pi, xi), bw)| ((xi - pi) / (bw * factor)).powi(2))
                        .sum();
                    (-0.5 * e).exp()
                })
                .sum::<f64>()
                / self.points.len() as f64
                * norm
        };
        let cat: f64 = space
            .categorical_dims()
            .iter()
            .zip(&self.tables)
            .map(|(&d, t)| t[config.0[d] as usize])
            .product();
        mix * cat
    }

    /// Draws from the KDE with bandwidths multiplied by `factor`.
    pub fn sample<R: Rng + ?Sized>(&self, space: &ConfigSpace, factor: f64, rng: &mut R) -> Config {
        let cont = space.continuous_dims();
        let cats = space.categorical_dims();
        let mut values = vec![0i64; space.dim()];
        let centre = &self.points[rng.random_range(0..self.points.len())];
        for (j, &d) in cont.iter().enumerate() {
            let sd = self.bandwidths[j] * factor;
            let u = Normal::new(centre[j], sd).expect("positive bandwidth").sample(rng);
            values[d] = space.from_unit(d, u);
        }
        for (t, &d) in self.tables.iter().zip(&cats) {
            let mut r: f64 = rng.random();
            let mut pick = t.len() - 1;
            for (i, p) in t.iter().enumerate() {
                if r < *p {
                    pick = i;
                    break;
                }
                r -= p;
            }
            values[d] = pick as i64;
        }
        Config(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    pub good: Kde,
    pub bad: Kde,
    /// Loss of the worst point in the good set.
    pub y_star: f64,
    pub n_good: usize,
    pub n_bad: usize,
}

/// Splits observations `(config, loss)` by loss and fits both densities.
pub fn tpe_fit(
    space: &ConfigSpace,
    observations: &[(Config, f64)],
    q: f64,
    n_min: usize,
) -> Result<KdeModel, BohbError> {
    let need = n_min + 2;
    if observations.len() < need {
        return Err(BohbError::TooFewObservations {
            found: observations.len(),
            need,
        });
    }
    let mut order: Vec<usize> = (0..observations.len()).collect();
    // stable: equal losses keep insertion order
    order.sort_by(|&a, &b| observations[a].1.total_cmp(&observations[b].1));
    let (n_l, n_g) = split_counts(observations.len(), q, n_min);
    let good: Vec<&Config> = order[..n_l].iter().map(|&i| &observations[i].0).collect();
    let bad: Vec<&Config> = order[order.len() - n_g..].iter().map(|&i| &observations[i].0).collect();
    Ok(KdeModel {
        good: Kde::fit(space, &good),
        bad: Kde::fit(space, &bad),
        y_star: observations[order[n_l - 1]].1,
        n_good: n_l,
        n_bad: n_g,
    })
}

/// Draws `n_s` candidates from the widened good density and returns the one
/// with the largest l(x)/g(x).
pub fn tpe_sample<R: Rng + ?Sized>(
    space: &ConfigSpace,
    model: &KdeModel,
    n_s: usize,
    bandwidth_factor: f64,
    rng: &mut R,
) -> Config {
    tpe_sample_excluding(space, model, n_s, bandwidth_factor, &BTreeSet::new(), rng)
}

/// As `tpe_sample`, but candidates in `seen` only win when every candidate
/// is in `seen`. On integer grids the ratio maximizer otherwise keeps
/// landing on configurations that were already evaluated.
pub fn tpe_sample_excluding<R: Rng + ?Sized>(
    space: &ConfigSpace,
    model: &KdeModel,
    n_s: usize,
    bandwidth_factor: f64,
    seen: &BTreeSet<Config>,
    rng: &mut R,
) -> Config {
    let mut best: Option<(bool, f64, Config)> = None;
    for _ in 0..n_s.max(1) {
        let c = model.good.sample(space, bandwidth_factor, rng);
        let l = model.good.pdf(space, &c).max(DENSITY_FLOOR);
        let g = model.bad.pdf(space, &c).max(DENSITY_FLOOR);
        let key = (!seen.contains(&c), l / g);
        if best.as_ref().is_none_or(|(f, r, _)| key > (*f, *r)) {
            best = Some((key.0, key.1, c));
        }
    }
    best.expect("at least one candidate").2
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct transcription of the split rule, kept separate from `split_counts`.
    fn reference(n_b: usize, q: f64, n_min: usize) -> (usize, usize) {
        let l = std::cmp::max(n_min, (q * n_b as f64 + 1e-9) as usize);
        let g = std::cmp::max(n_min, n_b.saturating_sub(l));
        (l, g)
    }

    #[test]
    fn split_spot_values() {
        assert_eq!(split_counts(20, 0.15, 2), (3, 17));
        assert_eq!(split_counts(4, 0.15, 2), (2, 2));
        for n_b in 0..=100 {
            for n_min in 2..=6 {
                for q in [0.1, 0.15, 0.25] {
                    assert_eq!(split_counts(n_b, q, n_min), reference(n_b, q, n_min));
                }
            }
        }
    }

    fn space1() -> ConfigSpace {
        ConfigSpace::layer_sizes(1, 4, 64).unwrap()
    }

    #[test]
    fn ties_still_give_two_densities() {
        let obs: Vec<(Config, f64)> = (0..6).map(|i| (Config(vec![4 + i]), 1.0)).collect();
        let m = tpe_fit(&space1(), &obs, 0.15, 2).unwrap();
        assert_eq!((m.n_good, m.n_bad), (2, 4));
        assert_eq!(m.good.points.len(), 2);
        // stable order: first two inserted are good
        assert_eq!(m.good.points[0][0], 0.0);
        assert!(tpe_fit(&space1(), &obs[..3], 0.15, 2).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        let space = space1();
        let obs: Vec<(Config, f64)> = (0..10).map(|i| (Config(vec![20 + 3 * i]), i as f64)).collect();
        let m = tpe_fit(&space, &obs, 0.3, 2).unwrap();
        // Riemann sum on the unit line, wide enough to cover the tails
        let kde = &m.bad;
        let bw = kde.bandwidths[0];
        let (lo, hi, steps) = (-1.0, 2.0, 30_000);
        let h = (hi - lo) / steps as f64;
        let mut total = 0.0;
        for k in 0..steps {
            let u = lo + (k as f64 + 0.5) * h;
            let mix: f64 = kde
                .points
                .iter()
                .map(|p| (-0.5 * ((u - p[0]) / bw).powi(2)).exp())
                .sum::<f64>()
                / kde.points.len() as f64
                / (bw * (2.0 * std::f64::consts::PI).sqrt());
            total += mix * h;
        }
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn single_candidate_is_returned() {
        let space = space1();
        let obs: Vec<(Config, f64)> = (0..8).map(|i| (Config(vec![10 + 5 * i]), i as f64)).collect();
        let m = tpe_fit(&space, &obs, 0.15, 2).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(tpe_sample(&space, &m, 1, 3.0, &mut a), m.good.sample(&space, 3.0, &mut b));
    }

    #[test]
    fn ratio_prefers_good_region() {
        let space = space1();
        let mut obs = Vec::new();
        for i in 0..5 {
            obs.push((Config(vec![8 + i]), 0.1 * i as f64));
        }
        for i in 0..15 {
            obs.push((Config(vec![44 + i]), 10.0 + i as f64));
        }
        let m = tpe_fit(&space, &obs, 0.25, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let inside = (0..1000)
            .filter(|_| (4..=16).contains(&tpe_sample(&space, &m, 64, 3.0, &mut rng).0[0]))
            .count();
        assert!(inside >= 990, "{inside}/1000");
    }

    #[test]
    fn categorical_tables_are_smoothed() {
        let space = ConfigSpace::from_json(
            br#"{"dimensions": [{"name": "c", "kind": "categorical", "choices": ["a", "b", "c"]}]}"#,
        )
        .unwrap();
        let configs = [Config(vec![0]), Config(vec![0]), Config(vec![1])];
        let refs: Vec<&Config> = configs.iter().collect();
        let kde = Kde::fit(&space, &refs);
        assert_eq!(kde.tables[0], vec![0.5, 2.0 / 6.0, 1.0 / 6.0]);
        assert_eq!(kde.pdf(&space, &Config(vec![2])), 1.0 / 6.0);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        proptest! {
            #[test]
            fn proposals_stay_in_bounds(
                pts in proptest::collection::vec((0i64..=60, 0i64..=10, 0.0f64..100.0), 5..30),
                seed in 0u64..1000,
            ) {
                let space = ConfigSpace::from_json(br#"{"dimensions": [
                    {"name": "a", "kind": "integer", "low": 0, "high": 60},
                    {"name": "b", "kind": "integer", "low": 0, "high": 10},
                    {"name": "c", "kind": "categorical", "choices": ["x", "y"]}
                ]}"#).unwrap();
                let obs: Vec<(Config, f64)> = pts.iter().map(|&(a, b, y)| (Config(vec![a, b, (a % 2)]), y)).collect();
                let m = tpe_fit(&space, &obs, 0.15, 3).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for _ in 0..20 {
                    prop_assert!(space.contains(&tpe_sample(&space, &m, 16, 3.0, &mut rng)));
                }
            }
        }
    }
}
