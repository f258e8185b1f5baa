use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BohbError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Dimension {
    Integer { name: String, low: i64, high: i64 },
    Categorical { name: String, choices: Vec<String> },
}

impl Dimension {
    pub fn name(&self) -> &str {
        match self {
            Dimension::Integer { name, .. } | Dimension::Categorical { name, .. } => name,
        }
    }

    fn contains(&self, v: i64) -> bool {
        match self {
            Dimension::Integer { low, high, .. } => (*low..=*high).contains(&v),
            Dimension::Categorical { choices, .. } => v >= 0 && (v as usize) < choices.len(),
        }
    }
}

/// One point: integer value or category index per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Config(pub Vec<i64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSpace {
    pub dimensions: Vec<Dimension>,
}

impl ConfigSpace {
    pub fn new(dimensions: Vec<Dimension>) -> Result<Self, BohbError> {
        let space = Self { dimensions };
        space.validate()?;
        Ok(space)
    }

    /// Per-layer node counts for a fixed depth, each in `[low, high]`.
    pub fn layer_sizes(depth: usize, low: i64, high: i64) -> Result<Self, BohbError> {
        Self::new(
            (1..=depth)
                .map(|i| Dimension::Integer {
                    name: format!("units_{i}"),
                    low,
                    high,
                })
                .collect(),
        )
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, BohbError> {
        let space: Self = serde_json::from_slice(bytes).map_err(|e| BohbError::Space(e.to_string()))?;
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<(), BohbError> {
        let bad = |m: String| Err(BohbError::Space(m));
        if self.dimensions.is_empty() {
            return bad("at least one dimension required".into());
        }
        for (i, d) in self.dimensions.iter().enumerate() {
            if self.dimensions[..i].iter().any(|o| o.name() == d.name()) {
                return bad(format!("duplicate dimension `{}`", d.name()));
            }
            match d {
                Dimension::Integer { name, low, high } if low > high => {
                    return bad(format!("`{name}`: low {low} > high {high}"));
                }
                Dimension::Categorical { name, choices } if choices.is_empty() => {
                    return bad(format!("`{name}`: no choices"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dimensions.len()
    }

    pub fn contains(&self, config: &Config) -> bool {
        config.0.len() == self.dim() && self.dimensions.iter().zip(&config.0).all(|(d, &v)| d.contains(v))
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Config {
        Config(
            self.dimensions
                .iter()
                .map(|d| match d {
                    Dimension::Integer { low, high, .. } => rng.random_range(*low..=*high),
                    Dimension::Categorical { choices, .. } => rng.random_range(0..choices.len()) as i64,
                })
                .collect(),
        )
    }

    pub fn continuous_dims(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| matches!(self.dimensions[i], Dimension::Integer { .. }))
            .collect()
    }

    pub fn categorical_dims(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| matches!(self.dimensions[i], Dimension::Categorical { .. }))
            .collect()
    }

    /// Integer value mapped into [0, 1].
    pub fn to_unit(&self, dim: usize, v: i64) -> f64 {
        match &self.dimensions[dim] {
            Dimension::Integer { low, high, .. } if high > low => (v - low) as f64 / (high - low) as f64,
            _ => 0.5,
        }
    }

    /// Inverse of `to_unit`, clipped and rounded to the nearest integer.
    pub fn from_unit(&self, dim: usize, u: f64) -> i64 {
        match &self.dimensions[dim] {
            Dimension::Integer { low, high, .. } => {
                let u = if u.is_finite() { u.clamp(0.0, 1.0) } else { 0.5 };
                (*low + (u * (high - low) as f64).round() as i64).clamp(*low, *high)
            }
            Dimension::Categorical { .. } => panic!("categorical dimension has no unit mapping"),
        }
    }

    /// JSON object keyed by dimension name; categories by label.
    pub fn to_json(&self, config: &Config) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (d, &v) in self.dimensions.iter().zip(&config.0) {
            let value = match d {
                Dimension::Integer { .. } => serde_json::Value::from(v),
                Dimension::Categorical { choices, .. } => serde_json::Value::from(choices[v as usize].clone()),
            };
            map.insert(d.name().to_string(), value);
        }
        serde_json::Value::Object(map)
    }

    /// Integer values as a list, e.g. layer widths.
    pub fn integers(&self, config: &Config) -> Vec<usize> {
        self.dimensions
            .iter()
            .zip(&config.0)
            .filter(|(d, _)| matches!(d, Dimension::Integer { .. }))
            .map(|(_, &v)| v.max(0) as usize)
            .collect()
    }
}
