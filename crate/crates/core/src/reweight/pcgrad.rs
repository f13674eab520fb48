use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{GrapeError, Result};
use crate::gradient::GradientVector;

/// Projects away conflicts between task gradients and averages the results.
///
/// Each `g_i` is visited against the other gradients in its own random
/// order; when `⟨g_i^pc, g_j⟩ < 0` the component along the original `g_j` is
/// removed. Zero-norm gradients are skipped.
pub fn pcgrad_combine<R: Rng + ?Sized>(task_grads: &[GradientVector], rng: &mut R) -> Result<GradientVector> {
    let n = task_grads.len();
    let orders: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.shuffle(rng);
            others
        })
        .collect();
    Ok(pcgrad_surgery(task_grads, &orders)?.1)
}

/// PCGrad with explicit per-gradient processing orders. Returns the surgered
/// gradients and their mean.
pub fn pcgrad_surgery(
    task_grads: &[GradientVector],
    orders: &[Vec<usize>],
) -> Result<(Vec<GradientVector>, GradientVector)> {
    let n = task_grads.len();
    if n == 0 {
        return Err(GrapeError::DimensionError { expected: 1, got: 0 });
    }
    if orders.len() != n {
        return Err(GrapeError::DimensionError {
            expected: n,
            got: orders.len(),
        });
    }
    let dim = task_grads[0].len();
    if let Some(g) = task_grads.iter().find(|g| g.len() != dim) {
        return Err(GrapeError::DimensionError {
            expected: dim,
            got: g.len(),
        });
    }
    let norms: Vec<f64> = task_grads.iter().map(|g| g.norm_sq()).collect();
    let mut surgered = Vec::with_capacity(n);
    for (i, order) in orders.iter().enumerate() {
        let mut g = task_grads[i].clone();
        for &j in order {
            if j == i || norms[j] == 0.0 {
                continue;
            }
            let d = g.dot(&task_grads[j])?;
            if d < 0.0 {
                g.axpy(-d / norms[j], &task_grads[j])?;
            }
        }
        surgered.push(g);
    }
    let mean = GradientVector::weighted_sum(&vec![1.0 / n as f64; n], &surgered)?;
    Ok((surgered, mean))
}
