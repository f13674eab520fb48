use super::config::{LrScheduleKind, OptimizerConfig};

/// Learning rate at step `t ∈ 1..=total`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub kind: LrScheduleKind,
    pub base: f64,
    pub total: u64,
}

impl LrSchedule {
    pub fn rate(&self, t: u64) -> f64 {
        let min = self.base / 10.0;
        let progress = (t.saturating_sub(1)) as f64 / self.total.max(1) as f64;
        match self.kind {
            LrScheduleKind::Constant => self.base,
            LrScheduleKind::Cosine => min + 0.5 * (self.base - min) * (1.0 + (std::f64::consts::PI * progress).cos()),
            LrScheduleKind::Wsd => {
                if progress < 0.8 {
                    self.base
                } else {
                    self.base - (self.base - min) * (progress - 0.8) / 0.2
                }
            }
        }
    }
}

/// Parameter-update rule. Reweighting always scores raw gradients; this only
/// decides how parameters move.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: i32,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, dim: usize) -> Self {
        let moments = match config {
            OptimizerConfig::Sgd => 0,
            OptimizerConfig::Adamw { .. } => dim,
        };
        Optimizer {
            config,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.steps = self.steps.saturating_add(1);
        match self.config {
            OptimizerConfig::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerConfig::Adamw {
                beta1,
                beta2,
                eps,
                weight_decay,
            } => {
                let c1 = 1.0 - beta1.powi(self.steps);
                let c2 = 1.0 - beta2.powi(self.steps);
                for i in 0..params.len() {
                    params[i] -= lr * weight_decay * params[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}
