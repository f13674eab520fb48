//! Trajectory recording, export, and the harnesses that check convergence of
//! the worst task loss and the decay of the spread of task losses.

pub mod harness;
mod trajectory;

pub use harness::{
    convergence_report, least_squares, running_min, task_variance, variance_monotonicity_check, ConvergenceReport,
    LinearFit, TheoremHarnessReport, VarianceCheck,
};
pub use trajectory::{Trajectory, TrajectoryRecord};
