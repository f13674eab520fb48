//! Checks on recorded trajectories: convergence of the worst task loss to a
//! known optimum, and eventual monotone decay of the task-loss variance.

use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::{GrapeError, Result};

/// Absolute slack allowed when testing whether the variance increased.
pub const VARIANCE_TOLERANCE: f64 = 1e-12;

/// Population variance of the task losses.
pub fn task_variance(losses: &[f64]) -> f64 {
    if losses.is_empty() {
        return 0.0;
    }
    let n = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n
}

pub fn running_min(series: &[f64]) -> Vec<f64> {
    series
        .iter()
        .scan(f64::INFINITY, |m, x| {
            *m = m.min(*x);
            Some(*m)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares of `y` on `x`. `None` with fewer than two points or
/// when every `x` is equal.
pub fn least_squares(points: &[(f64, f64)]) -> Option<LinearFit> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        points: points.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub true_optimum: f64,
    pub steps: Vec<u64>,
    /// `max_n L_n(θ_t) - L*` at each recorded step.
    pub suboptimality: Vec<f64>,
    pub running_min: Vec<f64>,
    /// Log-log fit of the running minimum against the step over the final
    /// half of the run. Non-positive values cannot enter the fit.
    pub rate_fit: Option<LinearFit>,
    pub skipped_in_fit: usize,
}

impl ConvergenceReport {
    pub fn final_running_min(&self) -> f64 {
        self.running_min.last().copied().unwrap_or(f64::INFINITY)
    }

    /// First recorded step whose running-minimum suboptimality is at most `eps`.
    pub fn first_step_within(&self, eps: f64) -> Option<u64> {
        self.steps
            .iter()
            .zip(&self.running_min)
            .find(|(_, m)| **m <= eps)
            .map(|(s, _)| *s)
    }
}

pub fn convergence_report(traj: &Trajectory, true_optimum: f64) -> Result<ConvergenceReport> {
    if traj.is_empty() {
        return Err(GrapeError::ReportError("trajectory has no records".into()));
    }
    if traj.num_tasks() == 0 {
        return Err(GrapeError::ReportError("trajectory has no task losses".into()));
    }
    let steps: Vec<u64> = traj.records.iter().map(|r| r.step).collect();
    let suboptimality: Vec<f64> = traj
        .records
        .iter()
        .map(|r| r.losses.iter().copied().fold(f64::NEG_INFINITY, f64::max) - true_optimum)
        .collect();
    let running = running_min(&suboptimality);
    let last = *steps.last().unwrap();
    let mut skipped = 0;
    let mut points = Vec::new();
    for (s, m) in steps.iter().zip(&running) {
        if *s == 0 || 2 * *s < last {
            continue;
        }
        if *m > 0.0 {
            points.push(((*s as f64).ln(), m.ln()));
        } else {
            skipped += 1;
        }
    }
    Ok(ConvergenceReport {
        true_optimum,
        steps,
        suboptimality,
        running_min: running,
        rate_fit: least_squares(&points),
        skipped_in_fit: skipped,
    })
}

/// Outcome of the eventual-monotonicity test on `σ²_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceCheck {
    pub variances: Vec<f64>,
    /// Smallest recorded step after which the variance never increases by
    /// more than [`VARIANCE_TOLERANCE`].
    pub t0: u64,
    /// Latest acceptable `t0`.
    pub cap: u64,
    pub passed: bool,
    /// Largest increase between consecutive records at or after `t0`
    /// (zero when the variance only decreases).
    pub max_increase_after_t0: f64,
    /// Increases beyond the tolerance that start at or after `cap`.
    pub increases_after_cap: usize,
    pub max_increase_after_cap: f64,
}

/// Looks for a `T_0 ≤ burn_in_fraction · T` after which the task-loss
/// variance is nonincreasing. A failure is reported in the result, not
/// raised.
pub fn variance_monotonicity_check(traj: &Trajectory, burn_in_fraction: f64) -> Result<VarianceCheck> {
    if traj.is_empty() {
        return Err(GrapeError::ReportError("trajectory has no records".into()));
    }
    if !(0.0..=1.0).contains(&burn_in_fraction) {
        return Err(GrapeError::ReportError(format!(
            "burn-in fraction {burn_in_fraction} is outside [0, 1]"
        )));
    }
    let variances: Vec<f64> = traj.records.iter().map(|r| task_variance(&r.losses)).collect();
    let steps: Vec<u64> = traj.records.iter().map(|r| r.step).collect();
    let cap = (burn_in_fraction * *steps.last().unwrap() as f64).floor() as u64;
    let increase = |j: usize| variances[j + 1] - variances[j];
    let pairs = variances.len() - 1;

    let last_violation = (0..pairs).rev().find(|&j| increase(j) > VARIANCE_TOLERANCE);
    let t0_index = last_violation.map_or(0, |j| j + 1);
    let t0 = steps[t0_index];
    let max_increase_after_t0 = (t0_index..pairs).map(increase).fold(0.0, f64::max);
    let after_cap: Vec<usize> = (0..pairs).filter(|&j| steps[j] >= cap).collect();
    let increases_after_cap = after_cap.iter().filter(|&&j| increase(j) > VARIANCE_TOLERANCE).count();
    let max_increase_after_cap = after_cap.iter().map(|&j| increase(j)).fold(0.0, f64::max);

    Ok(VarianceCheck {
        variances,
        t0,
        cap,
        passed: t0 <= cap,
        max_increase_after_t0,
        increases_after_cap,
        max_increase_after_cap,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremHarnessReport {
    pub convergence: ConvergenceReport,
    pub variance: VarianceCheck,
}

impl TheoremHarnessReport {
    pub fn evaluate(traj: &Trajectory, true_optimum: f64, burn_in_fraction: f64) -> Result<Self> {
        Ok(TheoremHarnessReport {
            convergence: convergence_report(traj, true_optimum)?,
            variance: variance_monotonicity_check(traj, burn_in_fraction)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::TrajectoryRecord;
    use approx::assert_abs_diff_eq;

    fn traj_from(losses: &[Vec<f64>], steps: &[u64]) -> Trajectory {
        let n = losses[0].len();
        let mut t = Trajectory::new((0..n).map(|i| format!("t{i}")).collect(), vec!["d".into()]);
        for (l, s) in losses.iter().zip(steps) {
            t.push(TrajectoryRecord {
                step: *s,
                losses: l.clone(),
                alpha: vec![1.0],
                z: vec![1.0 / n as f64; n],
                task_scores: vec![0.0; n],
                domain_scores: vec![0.0],
                lr: 0.1,
                grad_evals: 0,
            })
            .unwrap();
        }
        t
    }

    #[test]
    fn variance_of_constant_is_zero() {
        assert_eq!(task_variance(&[2.0, 2.0, 2.0]), 0.0);
        assert_abs_diff_eq!(task_variance(&[1.0, 3.0]), 1.0, epsilon = 1e-15);
        assert_eq!(task_variance(&[]), 0.0);
    }

    #[test]
    fn least_squares_recovers_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 - 0.5 * i as f64)).collect();
        let fit = least_squares(&pts).unwrap();
        assert_abs_diff_eq!(fit.slope, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        assert!(least_squares(&[(1.0, 2.0)]).is_none());
        assert!(least_squares(&[(1.0, 2.0), (1.0, 3.0)]).is_none());
    }

    #[test]
    fn running_min_is_monotone() {
        assert_eq!(running_min(&[3.0, 1.0, 2.0, 0.5]), vec![3.0, 1.0, 1.0, 0.5]);
    }

    #[test]
    fn convergence_rate_of_inverse_sqrt() {
        let steps: Vec<u64> = (0..=1000).step_by(10).collect();
        let losses: Vec<Vec<f64>> = steps
            .iter()
            .map(|s| vec![1.0 + 1.0 / ((*s as f64) + 1.0).sqrt(), 1.0])
            .collect();
        let rep = convergence_report(&traj_from(&losses, &steps), 1.0).unwrap();
        let fit = rep.rate_fit.unwrap();
        assert!((fit.slope + 0.5).abs() < 0.01, "{fit:?}");
        assert_eq!(rep.first_step_within(0.1), Some(100));
        assert_eq!(rep.skipped_in_fit, 0);
    }

    #[test]
    fn zero_suboptimality_is_skipped_in_fit() {
        let steps = [0, 1, 2, 3, 4];
        let losses: Vec<Vec<f64>> = [1.0, 0.5, 0.0, 0.0, 0.0].iter().map(|x| vec![*x]).collect();
        let rep = convergence_report(&traj_from(&losses, &steps), 0.0).unwrap();
        assert_eq!(rep.skipped_in_fit, 3);
        assert!(rep.rate_fit.is_none());
        assert_eq!(rep.final_running_min(), 0.0);
    }

    #[test]
    fn variance_check_finds_last_increase() {
        let steps: Vec<u64> = (0..10).collect();
        let spreads = [4.0, 3.0, 3.5, 2.0, 1.0, 1.5, 1.0, 0.5, 0.25, 0.1];
        let losses: Vec<Vec<f64>> = spreads.iter().map(|s| vec![0.0, *s]).collect();
        let tr = traj_from(&losses, &steps);
        let ok = variance_monotonicity_check(&tr, 0.6).unwrap();
        assert_eq!(ok.t0, 5);
        assert_eq!(ok.cap, 5);
        assert!(ok.passed);
        assert_eq!(ok.max_increase_after_t0, 0.0);
        assert_eq!(ok.increases_after_cap, 0);
        let strict = variance_monotonicity_check(&tr, 0.2).unwrap();
        assert!(!strict.passed);
        assert_eq!(strict.increases_after_cap, 2);
        assert!(strict.max_increase_after_cap > 0.5);
    }

    #[test]
    fn tiny_increases_are_tolerated() {
        let steps: Vec<u64> = (0..4).collect();
        let losses = vec![vec![0.0, 1.0], vec![0.0, 0.5], vec![0.0, 0.5 + 1e-15], vec![0.0, 0.4]];
        let rep = variance_monotonicity_check(&traj_from(&losses, &steps), 0.0).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.t0, 0);
    }

    #[test]
    fn empty_trajectory_is_an_error() {
        let t = Trajectory::new(vec!["a".into()], vec!["d".into()]);
        assert!(convergence_report(&t, 0.0).is_err());
        assert!(variance_monotonicity_check(&t, 0.2).is_err());
    }
}
