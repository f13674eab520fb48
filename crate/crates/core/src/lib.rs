//! Group-robust multi-target domain reweighting.
//!
//! Two probability vectors are adapted alongside model training: domain
//! weights over the `K` source datasets that feed training batches, and task
//! weights over the `N` target validation sets. Task weights move toward the
//! targets that are currently improving slowest; domain weights move toward
//! the sources whose gradients best serve the prioritized targets. Both
//! updates are exponentiated-gradient (entropic mirror descent) steps on the
//! simplex.
//!
//! Module map:
//!
//! * [`simplex`] : simplex weight vectors and the multiplicative update.
//! * [`metrics`] : rate/gap of improvement and the EMA loss tracker.
//! * [`model`] : the differentiable-model contract and built-in models.
//! * [`data`] : dataset stores, mixture sampling, synthetic corpora, ingestion.
//! * [`reweight`] : alignment scoring, PCGrad, optimizers and the training loop.
//! * [`analysis`] : trajectories, export, variance/convergence harnesses.
//! * [`experiment`] : config parsing and end-to-end runs.
//! * [`scenarios`] and [`verify`] : canned instances and verification suites.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod data;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod gradient;
pub mod metrics;
pub mod model;
pub mod reweight;
pub mod scenarios;
pub mod simplex;
pub mod verify;

pub use error::{GrapeError, Result};
pub use exec::Execution;
pub use gradient::GradientVector;
pub use simplex::{Direction, SimplexWeights, UpdateParams};
