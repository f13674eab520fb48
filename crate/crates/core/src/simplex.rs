//! Probability-simplex weights and the exponentiated-gradient update.
//!
//! Domain weights (over source datasets) and task weights (over target
//! validation sets) are both [`SimplexWeights`]. Each reweighting step
//! multiplies the current weights by `exp(±η·score)` and renormalizes, which
//! is the closed-form solution of a linear objective regularized by the
//! entropic Bregman divergence to the previous weights.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GrapeError, Result};

/// Tolerance on `Σ w_i = 1` accepted when constructing from explicit values.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights")]
pub struct SimplexWeights {
    labels: Vec<String>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawWeights {
    labels: Vec<String>,
    values: Vec<f64>,
}

impl TryFrom<RawWeights> for SimplexWeights {
    type Error = GrapeError;

    fn try_from(raw: RawWeights) -> Result<Self> {
        SimplexWeights::new(raw.labels, raw.values)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `w_i ∝ w_i·exp(+η·s_i)`: high scores gain weight (domain weights).
    Ascend,
    /// `w_i ∝ w_i·exp(−η·s_i)`: low scores gain weight (task weights).
    Descend,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Ascend => 1.0,
            Direction::Descend => -1.0,
        }
    }
}

/// Parameters of one multiplicative update. `step_ratio` is the ratio of the
/// current learning rate to the regularization coefficient of the simplex
/// being updated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateParams {
    pub step_ratio: f64,
    pub direction: Direction,
    /// Entries are clamped to at least this value and renormalized. Zero
    /// disables the floor.
    pub floor: f64,
}

impl UpdateParams {
    pub fn new(step_ratio: f64, direction: Direction) -> Result<Self> {
        if !step_ratio.is_finite() || step_ratio < 0.0 {
            return Err(GrapeError::ConfigError(format!(
                "step ratio must be finite and non-negative, got {step_ratio}"
            )));
        }
        Ok(UpdateParams {
            step_ratio,
            direction,
            floor: 0.0,
        })
    }

    pub fn ascend(step_ratio: f64) -> Result<Self> {
        Self::new(step_ratio, Direction::Ascend)
    }

    pub fn descend(step_ratio: f64) -> Result<Self> {
        Self::new(step_ratio, Direction::Descend)
    }

    pub fn with_floor(mut self, floor: f64) -> Result<Self> {
        if !floor.is_finite() || floor < 0.0 {
            return Err(GrapeError::ConfigError(format!(
                "weight floor must be finite and non-negative, got {floor}"
            )));
        }
        self.floor = floor;
        Ok(self)
    }
}

/// Rescales a non-negative vector to sum to one.
pub fn normalize(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(GrapeError::DegenerateWeights("empty vector".into()));
    }
    if let Some(i) = raw.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(GrapeError::DegenerateWeights(format!(
            "entry {i} is {} (must be finite and non-negative)",
            raw[i]
        )));
    }
    let sum: f64 = raw.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(GrapeError::DegenerateWeights(format!("entries sum to {sum}")));
    }
    Ok(raw.iter().map(|v| v / sum).collect())
}

fn index_labels(m: usize) -> Vec<String> {
    (0..m).map(|i| i.to_string()).collect()
}

impl SimplexWeights {
    /// Builds weights from values that already sum to one within
    /// [`SUM_TOLERANCE`]; the values are renormalized exactly.
    pub fn new(labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if labels.len() != values.len() {
            return Err(GrapeError::DimensionError {
                expected: labels.len(),
                got: values.len(),
            });
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(GrapeError::DegenerateWeights(format!(
                "values sum to {sum}, expected 1"
            )));
        }
        let values = normalize(&values)?;
        Ok(SimplexWeights { labels, values })
    }

    /// Normalizes arbitrary non-negative values.
    pub fn from_unnormalized(labels: Vec<String>, raw: &[f64]) -> Result<Self> {
        if labels.len() != raw.len() {
            return Err(GrapeError::DimensionError {
                expected: labels.len(),
                got: raw.len(),
            });
        }
        Ok(SimplexWeights {
            labels,
            values: normalize(raw)?,
        })
    }

    /// Normalizes with index labels `"0", "1", …`.
    pub fn normalize(raw: &[f64]) -> Result<Self> {
        Self::from_unnormalized(index_labels(raw.len()), raw)
    }

    pub fn uniform(labels: Vec<String>) -> Result<Self> {
        let m = labels.len();
        if m == 0 {
            return Err(GrapeError::DegenerateWeights("empty label set".into()));
        }
        Ok(SimplexWeights {
            labels,
            values: vec![1.0 / m as f64; m],
        })
    }

    pub fn one_hot(labels: Vec<String>, index: usize) -> Result<Self> {
        let mut raw = vec![0.0; labels.len()];
        *raw.get_mut(index).ok_or(GrapeError::DimensionError {
            expected: labels.len(),
            got: index + 1,
        })? = 1.0;
        Self::from_unnormalized(labels, &raw)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Exponentiated-gradient step `w'_i ∝ w_i·exp(±η·s_i)`.
    ///
    /// Evaluated in log space after subtracting the maximum exponent over the
    /// support, so large `η·s` cannot overflow and adding a constant to every
    /// score leaves the result unchanged. Zero entries stay zero.
    pub fn multiplicative_update(&self, scores: &[f64], params: UpdateParams) -> Result<Self> {
        if scores.len() != self.len() {
            return Err(GrapeError::DimensionError {
                expected: self.len(),
                got: scores.len(),
            });
        }
        if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
            return Err(GrapeError::ScoreError {
                index,
                value: scores[index],
            });
        }
        if params.step_ratio == 0.0 && params.floor == 0.0 {
            return Ok(self.clone());
        }
        let sign = params.direction.sign();
        let exponents: Vec<Option<f64>> = self
            .values
            .iter()
            .zip(scores)
            .map(|(&w, &s)| (w > 0.0).then(|| w.ln() + sign * params.step_ratio * s))
            .collect();
        let max = exponents.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(GrapeError::DegenerateWeights("no positive entry to update".into()));
        }
        let raw: Vec<f64> = exponents.iter().map(|e| e.map_or(0.0, |e| (e - max).exp())).collect();
        let mut values = normalize(&raw)?;
        if params.floor > 0.0 {
            values.iter_mut().for_each(|v| *v = v.max(params.floor));
            values = normalize(&values)?;
        }
        Ok(SimplexWeights {
            labels: self.labels.clone(),
            values,
        })
    }

    /// Entropic Bregman divergence `Σ p_i log(p_i / q_i)` with `0·log 0 = 0`.
    pub fn bregman_divergence(&self, q: &SimplexWeights) -> Result<f64> {
        bregman_entropy_divergence(&self.values, &q.values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| GrapeError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| GrapeError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("weights serialize");
        fs::write(path, text + "\n").map_err(|e| GrapeError::io(path, e))
    }
}

pub fn bregman_entropy_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(GrapeError::DimensionError {
            expected: p.len(),
            got: q.len(),
        });
    }
    let mut total = 0.0;
    for (index, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(GrapeError::DivergenceUndefined { index });
            }
            total += pi * (pi / qi).ln();
        }
    }
    // Rounding can leave a tiny negative for p ≈ q.
    Ok(total.max(0.0))
}
