use serde::{Deserialize, Serialize};

use crate::error::{GrapeError, Result};
use crate::exec::Execution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Domain and task weights frozen uniform.
    Uniform,
    /// Domain reweighting against uniform task weights.
    Doge,
    /// DoGE with the target gradient replaced by PCGrad-combined task gradients.
    DogePcgrad,
    /// Joint task and domain reweighting with loss-normalized task gradients.
    Grape,
    /// GRAPE scored by absolute improvement (raw task gradients).
    GrapeGap,
    /// GRAPE with task gradients normalized by an EMA of the task loss.
    GrapeEma,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Uniform,
        Algorithm::Doge,
        Algorithm::DogePcgrad,
        Algorithm::Grape,
        Algorithm::GrapeGap,
        Algorithm::GrapeEma,
    ];

    pub fn updates_tasks(self) -> bool {
        matches!(self, Algorithm::Grape | Algorithm::GrapeGap | Algorithm::GrapeEma)
    }

    pub fn updates_domains(self) -> bool {
        !matches!(self, Algorithm::Uniform)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Uniform => "uniform",
            Algorithm::Doge => "doge",
            Algorithm::DogePcgrad => "doge_pcgrad",
            Algorithm::Grape => "grape",
            Algorithm::GrapeGap => "grape_gap",
            Algorithm::GrapeEma => "grape_ema",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == name)
            .ok_or_else(|| GrapeError::ConfigError(format!("unknown algorithm `{name}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrScheduleKind {
    #[default]
    Constant,
    /// Half-cosine from the base rate down to a tenth of it.
    Cosine,
    /// Constant, then linear decay to a tenth of the base rate over the
    /// final 20% of steps.
    Wsd,
}

/// How the validation gradient for the domain update is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMixMode {
    /// One batch `y ∼ mix(z)`; its gradient divided by its loss.
    #[default]
    Sampled,
    /// `Σ_n z_n ∇log l_n` from one batch per task.
    Expected,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    #[default]
    Sgd,
    /// Adam with decoupled weight decay.
    Adamw {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default = "default_weight_decay")]
        weight_decay: f64,
    },
}

impl OptimizerConfig {
    pub fn adamw() -> Self {
        OptimizerConfig::Adamw {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: default_weight_decay(),
        }
    }
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_weight_decay() -> f64 {
    0.01
}

/// Hyperparameters of a training run with reweighting.
///
/// `step_ratio_*` are the ratios of the base learning rate to the
/// regularization coefficients of the two simplices. At a reweight step the
/// ratio is rescaled by `lr_t / lr`, so learning-rate decay also shrinks
/// the weight updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReweightConfig {
    pub algorithm: Algorithm,
    pub step_ratio_alpha: f64,
    pub step_ratio_z: f64,
    pub update_every_alpha: u64,
    pub update_every_z: u64,
    pub total_steps: u64,
    /// Base learning rate.
    pub lr: f64,
    pub lr_schedule: LrScheduleKind,
    pub optimizer: OptimizerConfig,
    pub ema_beta: f64,
    pub task_mix_mode: TaskMixMode,
    /// Independent batch draws averaged into each alignment score.
    pub eval_replicates: u32,
    pub train_batch_size: usize,
    /// Batch size for reweight-step gradients; defaults to the train size.
    pub eval_batch_size: Option<usize>,
    /// Task losses are recorded every this many steps, plus at reweight steps
    /// and the final step.
    pub eval_every: u64,
    /// Replace every sampled batch by the exact mixture over whole datasets.
    pub full_batch: bool,
    pub weight_floor: f64,
    /// Abort when a task loss exceeds this multiple of its initial value.
    pub divergence_factor: f64,
    pub execution: Execution,
}

impl Default for ReweightConfig {
    fn default() -> Self {
        ReweightConfig {
            algorithm: Algorithm::Grape,
            step_ratio_alpha: 1.5,
            step_ratio_z: 10.0,
            update_every_alpha: 100,
            update_every_z: 100,
            total_steps: 1000,
            lr: 0.1,
            lr_schedule: LrScheduleKind::Constant,
            optimizer: OptimizerConfig::Sgd,
            ema_beta: 0.7,
            task_mix_mode: TaskMixMode::Sampled,
            eval_replicates: 1,
            train_batch_size: 16,
            eval_batch_size: None,
            eval_every: 10,
            full_batch: false,
            weight_floor: 0.0,
            divergence_factor: 1e6,
            execution: Execution::Parallel,
        }
    }
}

impl ReweightConfig {
    pub fn eval_batch_size(&self) -> usize {
        self.eval_batch_size.unwrap_or(self.train_batch_size)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, why: String| Err(GrapeError::ConfigError(format!("`{field}`: {why}")));
        for (field, v) in [
            ("step_ratio_alpha", self.step_ratio_alpha),
            ("step_ratio_z", self.step_ratio_z),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(field, format!("must be finite and > 0, got {v}"));
            }
        }
        for (field, v) in [
            ("update_every_alpha", self.update_every_alpha),
            ("update_every_z", self.update_every_z),
            ("total_steps", self.total_steps),
            ("eval_every", self.eval_every),
        ] {
            if v == 0 {
                return fail(field, "must be at least 1".into());
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail("lr", format!("must be finite and > 0, got {}", self.lr));
        }
        if !(self.ema_beta > 0.0 && self.ema_beta < 1.0) {
            return fail("ema_beta", format!("must lie in (0, 1), got {}", self.ema_beta));
        }
        if self.eval_replicates == 0 {
            return fail("eval_replicates", "must be at least 1".into());
        }
        if self.train_batch_size == 0 || self.eval_batch_size == Some(0) {
            return fail("train_batch_size", "batch sizes must be at least 1".into());
        }
        if !(self.weight_floor >= 0.0 && self.weight_floor < 1.0) {
            return fail("weight_floor", format!("must lie in [0, 1), got {}", self.weight_floor));
        }
        if !(self.divergence_factor > 1.0) {
            return fail("divergence_factor", "must exceed 1".into());
        }
        if let OptimizerConfig::Adamw {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.optimizer
        {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) || weight_decay < 0.0 {
                return fail("optimizer", "invalid AdamW hyperparameters".into());
            }
        }
        Ok(())
    }
}
