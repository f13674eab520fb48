//! Per-step learning-progress measures and the EMA loss tracker.

use serde::{Deserialize, Serialize};

use crate::error::{GrapeError, Result};

/// Denominators below this value are rejected (or clamped by callers).
pub const LOSS_FLOOR: f64 = 1e-8;

/// Rate of improvement `(l_prev − l_next) / l_prev`.
pub fn roi(l_prev: f64, l_next: f64) -> Result<f64> {
    check_finite(l_next)?;
    Ok((l_prev - l_next) / checked_denominator(l_prev)?)
}

/// [`roi`] with the denominator clamped to [`LOSS_FLOOR`].
pub fn roi_clamped(l_prev: f64, l_next: f64) -> f64 {
    (l_prev - l_next) / l_prev.max(LOSS_FLOOR)
}

/// Gap of improvement `l_prev − l_next`.
pub fn goi(l_prev: f64, l_next: f64) -> Result<f64> {
    check_finite(l_prev)?;
    check_finite(l_next)?;
    Ok(l_prev - l_next)
}

/// Improvement normalized by the running average loss.
pub fn roi_ema(l_prev: f64, l_next: f64, ema: f64) -> Result<f64> {
    check_finite(l_prev)?;
    check_finite(l_next)?;
    Ok((l_prev - l_next) / checked_denominator(ema)?)
}

fn check_finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(GrapeError::DegenerateLoss {
            value: v,
            floor: LOSS_FLOOR,
        })
    }
}

pub(crate) fn checked_denominator(l: f64) -> Result<f64> {
    if l.is_finite() && l >= LOSS_FLOOR {
        Ok(l)
    } else {
        Err(GrapeError::DegenerateLoss {
            value: l,
            floor: LOSS_FLOOR,
        })
    }
}

/// Exponential moving averages of per-task losses.
///
/// A task's average is seeded with its first observation rather than zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskLossState {
    beta: f64,
    current: Vec<Option<f64>>,
    ema: Vec<Option<f64>>,
}

impl TaskLossState {
    pub fn new(num_tasks: usize, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(GrapeError::ConfigError(format!(
                "ema beta must lie in (0, 1), got {beta}"
            )));
        }
        Ok(TaskLossState {
            beta,
            current: vec![None; num_tasks],
            ema: vec![None; num_tasks],
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `ema ← β·ema + (1 − β)·l_obs`, returning the new average.
    pub fn observe(&mut self, task: usize, l_obs: f64) -> Result<f64> {
        if !l_obs.is_finite() || l_obs < 0.0 {
            return Err(GrapeError::DegenerateLoss {
                value: l_obs,
                floor: 0.0,
            });
        }
        let next = match self.ema[task] {
            None => l_obs,
            Some(prev) => self.beta * prev + (1.0 - self.beta) * l_obs,
        };
        self.ema[task] = Some(next);
        self.current[task] = Some(l_obs);
        Ok(next)
    }

    pub fn ema(&self, task: usize) -> Option<f64> {
        self.ema[task]
    }

    pub fn current(&self, task: usize) -> Option<f64> {
        self.current[task]
    }

    /// EMA clamped to the loss floor, for use as a denominator.
    pub fn ema_denominator(&self, task: usize) -> Option<f64> {
        self.ema[task].map(|e| e.max(LOSS_FLOOR))
    }
}

/// Standalone form of the EMA rule, `β·ema + (1 − β)·l_obs`.
pub fn ema_update(ema: f64, l_obs: f64, beta: f64) -> f64 {
    beta * ema + (1.0 - beta) * l_obs
}
