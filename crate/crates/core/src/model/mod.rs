//! The differentiable-model contract and the built-in models.
//!
//! Reweighting sees models only through flat parameter vectors and the
//! loss/gradient of a batch, so any model honoring [`DifferentiableModel`]
//! can be plugged into the training loop.

mod char_lm;
mod quadratic;
mod softmax;

pub use char_lm::CharLmModel;
pub use quadratic::{MinimaxSolution, QuadraticFamily};
pub use softmax::SoftmaxRegression;

use crate::data::Example;
use crate::error::{GrapeError, Result};
use crate::gradient::GradientVector;
use crate::metrics::checked_denominator;

pub trait DifferentiableModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn param_dim(&self) -> usize;

    /// Mean loss over the batch; finite and non-negative.
    fn loss(&self, params: &[f64], batch: &[&Example]) -> Result<f64>;

    /// Mean loss and its gradient, from a single pass.
    fn loss_and_grad(&self, params: &[f64], batch: &[&Example]) -> Result<(f64, GradientVector)>;

    fn grad(&self, params: &[f64], batch: &[&Example]) -> Result<GradientVector> {
        Ok(self.loss_and_grad(params, batch)?.1)
    }

    /// Starting parameters when none are configured.
    fn init_params(&self) -> Vec<f64> {
        vec![0.0; self.param_dim()]
    }
}

pub(crate) fn check_call(model: &dyn DifferentiableModel, params: &[f64], batch: &[&Example]) -> Result<()> {
    if batch.is_empty() {
        return Err(GrapeError::EmptyBatch);
    }
    if params.len() != model.param_dim() {
        return Err(GrapeError::DimensionError {
            expected: model.param_dim(),
            got: params.len(),
        });
    }
    Ok(())
}

/// `∇ log l = ∇l / l`. Losses below the floor are rejected.
pub fn normalized_grad(g: &GradientVector, loss: f64) -> Result<GradientVector> {
    let l = checked_denominator(loss)?;
    Ok(g.clone().scaled(1.0 / l))
}

/// Largest absolute difference between the analytic gradient and central
/// differences with step `h`.
pub fn finite_diff_check(model: &dyn DifferentiableModel, params: &[f64], batch: &[&Example], h: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(GrapeError::ConfigError(format!(
            "finite-difference step {h} outside [1e-7, 1e-3]"
        )));
    }
    if model.param_dim() == 0 {
        return Ok(0.0);
    }
    let analytic = model.grad(params, batch)?;
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = model.loss(&probe, batch)?;
        probe[i] = orig - h;
        let down = model.loss(&probe, batch)?;
        probe[i] = orig;
        worst = worst.max(((up - down) / (2.0 * h) - analytic[i]).abs());
    }
    Ok(worst)
}
