use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_call, DifferentiableModel};
use crate::data::Example;
use crate::error::{GrapeError, Result};
use crate::gradient::GradientVector;

/// `N` diagonal quadratic tasks `l_n(θ) = ½ Σ_i c_ni (θ_i − θ*_ni)²`.
///
/// Examples are [`Example::Quadratic`] draws whose `mix` selects a convex
/// combination of tasks and whose `offset` shifts the optimum, which adds
/// zero-mean noise to the gradient when offsets are drawn symmetrically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFamily {
    curvatures: Vec<Vec<f64>>,
    optima: Vec<Vec<f64>>,
}

/// The point minimizing the worst task loss.
#[derive(Clone, Debug, PartialEq)]
pub struct MinimaxSolution {
    /// `min_θ max_n l_n(θ)`, certified to within `gap`.
    pub value: f64,
    pub theta: Vec<f64>,
    /// Dual weights over tasks.
    pub task_weights: Vec<f64>,
    /// Upper bound minus lower bound at termination.
    pub gap: f64,
}

impl QuadraticFamily {
    pub fn new(curvatures: Vec<Vec<f64>>, optima: Vec<Vec<f64>>) -> Result<Self> {
        let n = curvatures.len();
        if n == 0 || optima.len() != n {
            return Err(GrapeError::ConfigError(
                "quadratic family needs matching, non-empty curvature and optimum lists".into(),
            ));
        }
        let d = curvatures[0].len();
        for (c, o) in curvatures.iter().zip(&optima) {
            if c.len() != d || o.len() != d {
                return Err(GrapeError::DimensionError {
                    expected: d,
                    got: c.len().min(o.len()),
                });
            }
            if c.iter().any(|v| !(v.is_finite() && *v > 0.0)) || o.iter().any(|v| !v.is_finite()) {
                return Err(GrapeError::ConfigError(
                    "curvatures must be positive and optima finite".into(),
                ));
            }
        }
        Ok(QuadraticFamily { curvatures, optima })
    }

    /// Curvatures uniform in `[mu, smooth]`, optima uniform in `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(
        tasks: usize,
        dim: usize,
        mu: f64,
        smooth: f64,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0 < mu && mu <= smooth) {
            return Err(GrapeError::ConfigError(format!(
                "need 0 < mu <= L, got mu={mu}, L={smooth}"
            )));
        }
        let curvatures = (0..tasks)
            .map(|_| (0..dim).map(|_| rng.random_range(mu..=smooth)).collect())
            .collect();
        let optima = (0..tasks)
            .map(|_| (0..dim).map(|_| rng.random_range(-scale..=scale)).collect())
            .collect();
        Self::new(curvatures, optima)
    }

    pub fn num_tasks(&self) -> usize {
        self.curvatures.len()
    }

    pub fn dim(&self) -> usize {
        self.curvatures[0].len()
    }

    pub fn curvatures(&self) -> &[Vec<f64>] {
        &self.curvatures
    }

    pub fn optima(&self) -> &[Vec<f64>] {
        &self.optima
    }

    /// Largest curvature, the smoothness constant of every task.
    pub fn smoothness(&self) -> f64 {
        self.curvatures.iter().flatten().copied().fold(0.0, f64::max)
    }

    pub fn task_loss(&self, n: usize, theta: &[f64]) -> f64 {
        task_loss(&self.curvatures[n], &self.optima[n], theta, None)
    }

    pub fn task_losses(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.num_tasks()).map(|n| self.task_loss(n, theta)).collect()
    }

    /// Noise-free example of task `n`.
    pub fn task_example(&self, n: usize) -> Example {
        let mut mix = vec![0.0; self.num_tasks()];
        mix[n] = 1.0;
        Example::Quadratic {
            mix,
            offset: vec![0.0; self.dim()],
        }
    }

    /// Minimizer of `Σ λ_n l_n` for task weights `λ`.
    fn weighted_minimizer(&self, lambda: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let (num, den) = lambda.iter().enumerate().fold((0.0, 0.0), |(num, den), (n, l)| {
                    let c = self.curvatures[n][i];
                    (num + l * c * self.optima[n][i], den + l * c)
                });
                num / den
            })
            .collect()
    }

    /// Solves `min_θ max_n l_n(θ)` through its dual `max_{λ∈Δ} min_θ Σ λ_n l_n(θ)`.
    ///
    /// The dual gradient is the vector of task losses at the weighted
    /// minimizer; exponentiated-gradient ascent with an adaptive step runs
    /// until the primal-dual gap is below `tol` (or the iteration cap).
    pub fn minimax_optimum(&self, tol: f64) -> MinimaxSolution {
        let n = self.num_tasks();
        let mut lambda = vec![1.0 / n as f64; n];
        let mut eta = 1.0;
        let eval = |lambda: &[f64]| {
            let theta = self.weighted_minimizer(lambda);
            let losses = self.task_losses(&theta);
            let dual: f64 = lambda.iter().zip(&losses).map(|(l, v)| l * v).sum();
            (theta, losses, dual)
        };
        let (mut theta, mut losses, mut dual) = eval(&lambda);
        let mut best_upper = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut best_theta = theta.clone();
        let mut best_lower = dual;
        for iter in 0..2_000_000u32 {
            if best_upper - best_lower <= tol {
                break;
            }
            if iter % 2000 == 1999 || eta < 1e-9 {
                if let Some(p) = self.polish(&lambda) {
                    let (t2, l2, d2) = eval(&p);
                    best_lower = best_lower.max(d2);
                    let upper = l2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if upper < best_upper {
                        best_upper = upper;
                        best_theta = t2.clone();
                    }
                    if d2 >= dual {
                        lambda = p;
                        theta = t2;
                        losses = l2;
                        dual = d2;
                    }
                    continue;
                }
            }
            let scale = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(1e-300);
            let max_e = losses.iter().map(|v| eta * v / scale).fold(f64::NEG_INFINITY, f64::max);
            let raw: Vec<f64> = lambda
                .iter()
                .zip(&losses)
                .map(|(l, v)| l * (eta * v / scale - max_e).exp())
                .collect();
            let z: f64 = raw.iter().sum();
            let candidate: Vec<f64> = raw.iter().map(|r| (r / z).max(1e-300)).collect();
            let (t2, l2, d2) = eval(&candidate);
            if d2 >= dual {
                lambda = candidate;
                theta = t2;
                losses = l2;
                dual = d2;
                eta = (eta * 1.5).min(1e6);
            } else {
                eta *= 0.5;
                if eta < 1e-12 {
                    break;
                }
            }
            best_lower = best_lower.max(dual);
            let upper = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if upper < best_upper {
                best_upper = upper;
                best_theta = theta.clone();
            }
        }
        let _ = theta;
        MinimaxSolution {
            value: best_lower,
            theta: best_theta,
            task_weights: lambda,
            gap: best_upper - best_lower,
        }
    }
}

impl QuadraticFamily {
    /// Newton solve of the optimality conditions on the support of `lambda`:
    /// equal losses across supported tasks and weights summing to one.
    fn polish(&self, lambda: &[f64]) -> Option<Vec<f64>> {
        let top = lambda.iter().copied().fold(0.0, f64::max);
        let support: Vec<usize> = (0..lambda.len()).filter(|&n| lambda[n] > 1e-8 * top).collect();
        let m = support.len();
        let mut full = vec![0.0; lambda.len()];
        for &n in &support {
            full[n] = lambda[n];
        }
        for _ in 0..50 {
            let theta = self.weighted_minimizer(&full);
            let losses = self.task_losses(&theta);
            let denom: Vec<f64> = (0..self.dim())
                .map(|i| support.iter().map(|&n| full[n] * self.curvatures[n][i]).sum())
                .collect();
            // d l_a / d λ_b through the weighted minimizer.
            let dl = |a: usize, b: usize| -> f64 {
                (0..self.dim())
                    .map(|i| {
                        let dtheta = self.curvatures[b][i] * (self.optima[b][i] - theta[i]) / denom[i];
                        self.curvatures[a][i] * (theta[i] - self.optima[a][i]) * dtheta
                    })
                    .sum()
            };
            let mut jac = vec![vec![0.0; m]; m];
            let mut rhs = vec![0.0; m];
            for j in 1..m {
                rhs[j - 1] = losses[support[0]] - losses[support[j]];
                for k in 0..m {
                    jac[j - 1][k] = dl(support[j], support[k]) - dl(support[0], support[k]);
                }
            }
            rhs[m - 1] = 1.0 - support.iter().map(|&n| full[n]).sum::<f64>();
            jac[m - 1].iter_mut().for_each(|v| *v = 1.0);
            let step = solve_dense(jac, rhs)?;
            let mut done = true;
            for (k, &n) in support.iter().enumerate() {
                full[n] += step[k];
                if !(full[n] > 0.0) {
                    return None;
                }
                done &= step[k].abs() <= 1e-16 * full[n].max(1e-300);
            }
            if done {
                break;
            }
        }
        let sum: f64 = full.iter().sum();
        Some(full.into_iter().map(|v| v / sum).collect())
    }
}

/// Gaussian elimination with partial pivoting. `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (upper, lower) = a.split_at_mut(row);
            for (x, p) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn task_loss(c: &[f64], opt: &[f64], theta: &[f64], offset: Option<&[f64]>) -> f64 {
    let mut s = 0.0;
    for i in 0..theta.len() {
        let shift = offset.map_or(0.0, |o| o[i]);
        let r = theta[i] - opt[i] - shift;
        s += c[i] * r * r;
    }
    0.5 * s
}

impl QuadraticFamily {
    fn unpack<'a>(&self, e: &'a Example) -> Result<(&'a [f64], &'a [f64])> {
        match e {
            Example::Quadratic { mix, offset } if mix.len() == self.num_tasks() && offset.len() == self.dim() => {
                Ok((mix, offset))
            }
            other => Err(GrapeError::IncompatibleExample {
                model: "quadratic",
                detail: format!("{other:?}"),
            }),
        }
    }
}

impl DifferentiableModel for QuadraticFamily {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn param_dim(&self) -> usize {
        self.dim()
    }

    fn loss(&self, params: &[f64], batch: &[&Example]) -> Result<f64> {
        check_call(self, params, batch)?;
        let mut total = 0.0;
        for e in batch {
            let (mix, offset) = self.unpack(e)?;
            for (n, w) in mix.iter().enumerate() {
                if *w != 0.0 {
                    total += w * task_loss(&self.curvatures[n], &self.optima[n], params, Some(offset));
                }
            }
        }
        Ok(total / batch.len() as f64)
    }

    fn loss_and_grad(&self, params: &[f64], batch: &[&Example]) -> Result<(f64, GradientVector)> {
        check_call(self, params, batch)?;
        let mut total = 0.0;
        let mut g = vec![0.0; self.dim()];
        for e in batch {
            let (mix, offset) = self.unpack(e)?;
            for (n, w) in mix.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                let (c, opt) = (&self.curvatures[n], &self.optima[n]);
                let mut s = 0.0;
                for i in 0..params.len() {
                    let r = params[i] - opt[i] - offset[i];
                    s += c[i] * r * r;
                    g[i] += w * c[i] * r;
                }
                total += w * 0.5 * s;
            }
        }
        let m = batch.len() as f64;
        g.iter_mut().for_each(|v| *v /= m);
        Ok((total / m, GradientVector(g)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SeededSampler, Stream};
    use crate::model::finite_diff_check;

    fn unit() -> QuadraticFamily {
        QuadraticFamily::new(vec![vec![1.0, 1.0]], vec![vec![0.0, 0.0]]).unwrap()
    }

    #[test]
    fn hand_evaluated_loss_and_gradient() {
        let q = unit();
        let e = q.task_example(0);
        assert_eq!(q.loss(&[1.0, 1.0], &[&e]).unwrap(), 1.0);
        assert_eq!(q.grad(&[1.0, 1.0], &[&e]).unwrap().0, vec![1.0, 1.0]);
        assert_eq!(q.loss(&[0.0, 0.0], &[&e]).unwrap(), 0.0);
    }

    #[test]
    fn empty_batch_and_wrong_kind() {
        let q = unit();
        assert!(matches!(q.loss(&[0.0, 0.0], &[]), Err(GrapeError::EmptyBatch)));
        let t = Example::Tokens(vec![1]);
        assert!(q.loss(&[0.0, 0.0], &[&t]).is_err());
        assert!(q.loss(&[0.0], &[&q.task_example(0)]).is_err());
    }

    #[test]
    fn finite_differences_are_exact_up_to_rounding() {
        let mut rng = SeededSampler::new(3, Stream::Auxiliary);
        let q = QuadraticFamily::random(3, 4, 0.5, 2.0, 1.0, rng.rng()).unwrap();
        let e = Example::Quadratic {
            mix: vec![0.2, 0.5, 0.3],
            offset: vec![0.1, -0.2, 0.0, 0.3],
        };
        let err = finite_diff_check(&q, &[0.3, -0.7, 1.1, 0.0], &[&e, &q.task_example(1)], 1e-5).unwrap();
        assert!(err <= 1e-9, "{err}");
    }

    /// Zooming grid search over three task weights on the smooth concave dual
    /// `max_λ min_θ Σ λ_n l_n(θ)`, evaluated in closed form.
    fn brute_force_minimax(q: &QuadraticFamily) -> f64 {
        let dual = |l: [f64; 3]| -> f64 {
            (0..q.dim())
                .map(|i| {
                    let c: Vec<f64> = (0..3).map(|n| q.curvatures()[n][i]).collect();
                    let o: Vec<f64> = (0..3).map(|n| q.optima()[n][i]).collect();
                    let w: f64 = (0..3).map(|n| l[n] * c[n]).sum();
                    let t = (0..3).map(|n| l[n] * c[n] * o[n]).sum::<f64>() / w;
                    (0..3).map(|n| 0.5 * l[n] * c[n] * (t - o[n]).powi(2)).sum::<f64>()
                })
                .sum()
        };
        let (mut ca, mut cb, mut half) = (1.0 / 3.0, 1.0 / 3.0, 0.5f64);
        let mut best = f64::NEG_INFINITY;
        for _ in 0..200 {
            let steps = 20;
            let (mut ba, mut bb) = (ca, cb);
            for i in 0..=steps {
                for j in 0..=steps {
                    let a = (ca - half + 2.0 * half * i as f64 / steps as f64).clamp(0.0, 1.0);
                    let b = (cb - half + 2.0 * half * j as f64 / steps as f64).clamp(0.0, 1.0 - a);
                    let v = dual([a, b, 1.0 - a - b]);
                    if v > best {
                        best = v;
                        ba = a;
                        bb = b;
                    }
                }
            }
            ca = ba;
            cb = bb;
            half *= 0.8;
        }
        best
    }

    #[test]
    fn minimax_matches_brute_force() {
        let mut rng = SeededSampler::new(9, Stream::Auxiliary);
        for _ in 0..5 {
            let q = QuadraticFamily::random(3, 2, 0.5, 2.0, 1.0, rng.rng()).unwrap();
            let sol = q.minimax_optimum(1e-13);
            let brute = brute_force_minimax(&q);
            assert!(sol.gap <= 1e-10, "gap {}", sol.gap);
            let at_theta = q.task_losses(&sol.theta).into_iter().fold(f64::NEG_INFINITY, f64::max);
            assert!((at_theta - sol.value).abs() <= 1e-10);
            assert!((sol.value - brute).abs() <= 1e-8, "{} vs {}", sol.value, brute);
        }
    }

    #[test]
    fn symmetric_pair_has_midpoint_optimum() {
        let q = QuadraticFamily::new(vec![vec![1.0], vec![1.0]], vec![vec![-1.0], vec![1.0]]).unwrap();
        let sol = q.minimax_optimum(1e-14);
        assert!((sol.value - 0.5).abs() < 1e-12);
        assert!(sol.theta[0].abs() < 1e-6);
        assert!((sol.task_weights[0] - 0.5).abs() < 1e-6);
    }
}
