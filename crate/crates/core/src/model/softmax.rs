use serde::{Deserialize, Serialize};

use super::{check_call, DifferentiableModel};
use crate::data::{Example, Target};
use crate::error::{GrapeError, Result};
use crate::gradient::GradientVector;

/// Multinomial logistic regression on feature records.
///
/// Parameters are `classes × (features + 1)` row-major, the last column of
/// each row being the bias. A scalar `y` is a class index; a vector `y` is a
/// target distribution over classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxRegression {
    features: usize,
    classes: usize,
}

impl SoftmaxRegression {
    pub fn new(features: usize, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(GrapeError::ConfigError(
                "softmax regression needs at least 2 classes".into(),
            ));
        }
        Ok(SoftmaxRegression { features, classes })
    }

    fn target(&self, y: &Target) -> Result<Vec<f64>> {
        let bad = |detail: String| GrapeError::IncompatibleExample {
            model: "softmax",
            detail,
        };
        match y {
            Target::Scalar(k) => {
                if k.fract() != 0.0 || *k < 0.0 || *k as usize >= self.classes {
                    return Err(bad(format!("class label {k} not in 0..{}", self.classes)));
                }
                let mut t = vec![0.0; self.classes];
                t[*k as usize] = 1.0;
                Ok(t)
            }
            Target::Vector(p) => {
                let sum: f64 = p.iter().sum();
                if p.len() != self.classes || p.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > 1e-9 {
                    return Err(bad("target vector must be a distribution over classes".into()));
                }
                Ok(p.clone())
            }
        }
    }

    /// Log-probabilities for one feature vector.
    fn log_probs(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let stride = self.features + 1;
        let logits: Vec<f64> = params
            .chunks(stride)
            .map(|w| w[..self.features].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[self.features])
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        logits.into_iter().map(|l| l - lse).collect()
    }

    fn run(&self, params: &[f64], batch: &[&Example], grad: Option<&mut [f64]>) -> Result<f64> {
        check_call(self, params, batch)?;
        let stride = self.features + 1;
        let mut total = 0.0;
        let mut grad = grad;
        for e in batch {
            let Example::Features { x, y } = e else {
                return Err(GrapeError::IncompatibleExample {
                    model: "softmax",
                    detail: "expected a feature record".into(),
                });
            };
            if x.len() != self.features {
                return Err(GrapeError::DimensionError {
                    expected: self.features,
                    got: x.len(),
                });
            }
            let t = self.target(y)?;
            let lp = self.log_probs(params, x);
            total -= t.iter().zip(&lp).map(|(ti, l)| ti * l).sum::<f64>();
            if let Some(g) = grad.as_deref_mut() {
                for c in 0..self.classes {
                    let r = lp[c].exp() - t[c];
                    let row = &mut g[c * stride..(c + 1) * stride];
                    for (gi, xi) in row.iter_mut().zip(x) {
                        *gi += r * xi;
                    }
                    row[self.features] += r;
                }
            }
        }
        let m = batch.len() as f64;
        if let Some(g) = grad {
            g.iter_mut().for_each(|v| *v /= m);
        }
        Ok(total / m)
    }
}

impl DifferentiableModel for SoftmaxRegression {
    fn name(&self) -> &'static str {
        "softmax"
    }

    fn param_dim(&self) -> usize {
        self.classes * (self.features + 1)
    }

    fn loss(&self, params: &[f64], batch: &[&Example]) -> Result<f64> {
        self.run(params, batch, None)
    }

    fn loss_and_grad(&self, params: &[f64], batch: &[&Example]) -> Result<(f64, GradientVector)> {
        let mut g = vec![0.0; self.param_dim()];
        let loss = self.run(params, batch, Some(&mut g))?;
        Ok((loss, GradientVector(g)))
    }
}
