//! Alignment scoring, the two reweight steps and the training loop.
//!
//! Task weights descend on alignment scores `a_n = ⟨∇log l_n, ∇ℓ(x)⟩` with
//! `x ∼ mix(α)`, so tasks that the current mixture helps least gain weight.
//! Domain weights ascend on `a_k = ⟨g_k, ∇log ℓ(y)⟩` with `y ∼ mix(z)`, so
//! domains that help the prioritized tasks gain weight.

mod config;
mod optimizer;
mod pcgrad;
mod steps;
mod train;

pub use config::{Algorithm, LrScheduleKind, OptimizerConfig, ReweightConfig, TaskMixMode};
pub use optimizer::{LrSchedule, Optimizer};
pub use pcgrad::{pcgrad_combine, pcgrad_surgery};
pub use steps::{domain_reweight_step, task_reweight_step, StepContext, StepOutput, Streams};
pub use train::{train_run, InitialState, ReweightEvent, ReweightKind, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gradient::GradientVector;

/// Euclidean inner product of two gradients.
pub fn alignment(u: &GradientVector, v: &GradientVector) -> Result<f64> {
    u.dot(v)
}

/// Gradient evaluations spent, split by phase.
///
/// `task_grad_evals` counts every evaluation made inside task-reweight steps
/// (the per-task gradients plus the fresh training batch) and
/// `domain_grad_evals` those made inside domain-reweight steps (the
/// per-domain gradients plus the validation-mixture gradient).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadCounter {
    pub train_grad_evals: u64,
    pub task_grad_evals: u64,
    pub domain_grad_evals: u64,
}

impl OverheadCounter {
    pub fn reweight_evals(&self) -> u64 {
        self.task_grad_evals + self.domain_grad_evals
    }

    pub fn total(&self) -> u64 {
        self.train_grad_evals + self.reweight_evals()
    }

    /// Reweighting evaluations per training evaluation.
    pub fn overhead_ratio(&self) -> f64 {
        self.reweight_evals() as f64 / self.train_grad_evals.max(1) as f64
    }

    /// Closed-form count for GRAPE in sampled mode with one replicate:
    /// `⌊T/ΔT_z⌋·(N+1) + ⌊T/ΔT_α⌋·(K+1)` reweight evaluations.
    pub fn expected_grape(tasks: u64, domains: u64, every_z: u64, every_alpha: u64, steps: u64) -> OverheadCounter {
        OverheadCounter {
            train_grad_evals: steps,
            task_grad_evals: (steps / every_z) * (tasks + 1),
            domain_grad_evals: (steps / every_alpha) * (domains + 1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_examples() {
        let u = GradientVector(vec![1.0, 2.0]);
        let v = GradientVector(vec![3.0, -1.0]);
        assert_eq!(alignment(&u, &v).unwrap(), 1.0);
        assert_eq!(
            alignment(&GradientVector(vec![1.0, 0.0]), &GradientVector(vec![0.0, 5.0])).unwrap(),
            0.0
        );
        assert_eq!(alignment(&u, &u).unwrap(), u.norm_sq());
        assert!(alignment(&u, &GradientVector(vec![1.0])).is_err());
    }

    #[test]
    fn closed_form_overhead_for_reference_setting() {
        let c = OverheadCounter::expected_grape(6, 7, 100, 100, 1000);
        assert_eq!(c.task_grad_evals, 70);
        assert_eq!(c.domain_grad_evals, 80);
        assert_eq!(c.reweight_evals(), 150);
        assert!((c.overhead_ratio() - 0.15).abs() < 1e-15);
    }
}
