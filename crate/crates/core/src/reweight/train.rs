use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ReweightConfig};
use super::optimizer::{LrSchedule, Optimizer};
use super::steps::{domain_reweight_step, task_reweight_step, StepContext, Streams};
use super::OverheadCounter;
use crate::analysis::{Trajectory, TrajectoryRecord};
use crate::data::{MixtureStore, Side};
use crate::error::{GrapeError, Result};
use crate::metrics::{TaskLossState, LOSS_FLOOR};
use crate::model::DifferentiableModel;
use crate::simplex::SimplexWeights;

/// Starting parameters and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialState {
    pub params: Vec<f64>,
    pub alpha: SimplexWeights,
    pub z: SimplexWeights,
}

impl InitialState {
    /// Model default parameters and uniform weights.
    pub fn uniform(model: &dyn DifferentiableModel, store: &MixtureStore) -> Result<Self> {
        Ok(InitialState {
            params: model.init_params(),
            alpha: SimplexWeights::uniform(store.domain_labels())?,
            z: SimplexWeights::uniform(store.task_labels())?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReweightKind {
    Task,
    Domain,
}

/// Which parameters a reweight step scored against. `param_version` counts
/// optimizer updates applied before the scores were computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReweightEvent {
    pub step: u64,
    pub kind: ReweightKind,
    pub param_version: u64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: Vec<f64>,
    pub alpha: SimplexWeights,
    pub z: SimplexWeights,
    pub trajectory: Trajectory,
    pub counter: OverheadCounter,
    pub events: Vec<ReweightEvent>,
}

/// Full-validation-set loss of every task.
pub(crate) fn task_losses(
    model: &dyn DifferentiableModel,
    store: &MixtureStore,
    params: &[f64],
    cfg: &ReweightConfig,
) -> Result<Vec<f64>> {
    let tasks = store.side(Side::Tasks);
    cfg.execution
        .try_map(tasks.len(), |i| model.loss(params, &tasks[i].all()))
}

/// Runs `total_steps` optimizer steps with periodic task and domain
/// reweighting.
///
/// Steps are numbered `1..=T`; step `t` draws `x ∼ mix(α)`, updates the
/// parameters, then (when `t` is a multiple of the respective period)
/// updates `z` and afterwards `α`, both scored against the freshly updated
/// parameters. The domain update sees the task weights produced in the same
/// step. Baselines freeze whichever weights they do not adapt at uniform.
pub fn train_run(
    cfg: &ReweightConfig,
    model: &dyn DifferentiableModel,
    store: &MixtureStore,
    init: InitialState,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if init.params.len() != model.param_dim() {
        return Err(GrapeError::DimensionError {
            expected: model.param_dim(),
            got: init.params.len(),
        });
    }
    if init.alpha.len() != store.num_domains() || init.z.len() != store.num_tasks() {
        return Err(GrapeError::ConfigError(
            "initial weights do not match the number of domains and tasks".into(),
        ));
    }
    let algorithm = cfg.algorithm;
    let mut alpha = if algorithm == Algorithm::Uniform {
        SimplexWeights::uniform(store.domain_labels())?
    } else {
        init.alpha
    };
    let mut z = if algorithm.updates_tasks() {
        init.z
    } else {
        SimplexWeights::uniform(store.task_labels())?
    };
    let mut params = init.params;
    let schedule = LrSchedule {
        kind: cfg.lr_schedule,
        base: cfg.lr,
        total: cfg.total_steps,
    };
    let mut optimizer = Optimizer::new(cfg.optimizer, params.len());
    let mut streams = Streams::new(seed);
    let mut counter = OverheadCounter::default();
    let mut ema = TaskLossState::new(store.num_tasks(), cfg.ema_beta)?;
    let mut trajectory = Trajectory::new(store.task_labels(), store.domain_labels());
    let mut events = Vec::new();
    let mut task_scores = vec![0.0; store.num_tasks()];
    let mut domain_scores = vec![0.0; store.num_domains()];

    let initial_losses = task_losses(model, store, &params, cfg)?;
    trajectory.push(TrajectoryRecord {
        step: 0,
        losses: initial_losses.clone(),
        alpha: alpha.values().to_vec(),
        z: z.values().to_vec(),
        task_scores: task_scores.clone(),
        domain_scores: domain_scores.clone(),
        lr: schedule.rate(1),
        grad_evals: 0,
    })?;
    info!(
        "training {} for {} steps ({} domains, {} tasks)",
        algorithm.name(),
        cfg.total_steps,
        store.num_domains(),
        store.num_tasks()
    );

    for t in 1..=cfg.total_steps {
        let lr = schedule.rate(t);
        let (train_loss, grad) = {
            let ctx = StepContext {
                model,
                store,
                cfg,
                params: &params,
                lr,
            };
            let job = ctx.mixture_job(Side::Domains, &alpha, cfg.train_batch_size, &mut streams.train)?;
            ctx.run_jobs(std::slice::from_ref(&job))?.pop().expect("one job")
        };
        counter.train_grad_evals += 1;
        if !train_loss.is_finite() || !grad.is_finite() {
            return Err(GrapeError::NumericalDivergence {
                step: t,
                detail: format!("training loss {train_loss}"),
            });
        }
        optimizer.step(&mut params, &grad, lr);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(GrapeError::NumericalDivergence {
                step: t,
                detail: "non-finite parameters".into(),
            });
        }

        let mut fired = false;
        let ctx = StepContext {
            model,
            store,
            cfg,
            params: &params,
            lr,
        };
        if algorithm.updates_tasks() && t % cfg.update_every_z == 0 {
            let out = task_reweight_step(&ctx, &z, &alpha, &mut ema, &mut streams, &mut counter)?;
            z = out.weights;
            task_scores = out.scores;
            events.push(ReweightEvent {
                step: t,
                kind: ReweightKind::Task,
                param_version: t,
            });
            fired = true;
        }
        if algorithm.updates_domains() && t % cfg.update_every_alpha == 0 {
            let out = domain_reweight_step(&ctx, &alpha, &z, &mut streams, &mut counter)?;
            alpha = out.weights;
            domain_scores = out.scores;
            events.push(ReweightEvent {
                step: t,
                kind: ReweightKind::Domain,
                param_version: t,
            });
            fired = true;
        }

        if fired || t % cfg.eval_every == 0 || t == cfg.total_steps {
            let losses = task_losses(model, store, &params, cfg)?;
            for (n, (l, l0)) in losses.iter().zip(&initial_losses).enumerate() {
                if !l.is_finite() || *l > cfg.divergence_factor * l0.max(LOSS_FLOOR) {
                    return Err(GrapeError::NumericalDivergence {
                        step: t,
                        detail: format!("task `{}` loss {l} (initial {l0})", store.tasks()[n].name),
                    });
                }
            }
            debug!("step {t}: losses {losses:?}");
            trajectory.push(TrajectoryRecord {
                step: t,
                losses,
                alpha: alpha.values().to_vec(),
                z: z.values().to_vec(),
                task_scores: task_scores.clone(),
                domain_scores: domain_scores.clone(),
                lr,
                grad_evals: counter.total(),
            })?;
        }
    }

    Ok(TrainOutcome {
        params,
        alpha,
        z,
        trajectory,
        counter,
        events,
    })
}
