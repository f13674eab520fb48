use super::config::{Algorithm, ReweightConfig, TaskMixMode};
use super::pcgrad::pcgrad_combine;
use super::OverheadCounter;
use crate::data::{Example, MixtureStore, SeededSampler, Side, Stream};
use crate::error::Result;
use crate::gradient::GradientVector;
use crate::metrics::{TaskLossState, LOSS_FLOOR};
use crate::model::DifferentiableModel;
use crate::simplex::{SimplexWeights, UpdateParams};

/// The independent random streams of one run.
#[derive(Clone, Debug)]
pub struct Streams {
    pub train: SeededSampler,
    pub reweight_train: SeededSampler,
    pub task_batches: SeededSampler,
    pub domain_batches: SeededSampler,
    pub task_mixture: SeededSampler,
    pub pcgrad: SeededSampler,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Streams {
            train: SeededSampler::new(seed, Stream::Train),
            reweight_train: SeededSampler::new(seed, Stream::ReweightTrain),
            task_batches: SeededSampler::new(seed, Stream::TaskBatches),
            domain_batches: SeededSampler::new(seed, Stream::DomainBatches),
            task_mixture: SeededSampler::new(seed, Stream::TaskMixture),
            pcgrad: SeededSampler::new(seed, Stream::PcGrad),
        }
    }
}

/// Read-only view of the state a reweight step scores against.
#[derive(Clone, Copy)]
pub struct StepContext<'a> {
    pub model: &'a dyn DifferentiableModel,
    pub store: &'a MixtureStore,
    pub cfg: &'a ReweightConfig,
    pub params: &'a [f64],
    /// Current learning rate `γ_t`.
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub weights: SimplexWeights,
    pub scores: Vec<f64>,
    /// Mean batch loss per scored dataset, averaged over replicates.
    pub losses: Vec<f64>,
}

/// A gradient evaluation: one batch, or an exact weighted mixture of whole
/// datasets in full-batch mode.
pub(crate) enum Job<'a> {
    Batch(Vec<&'a Example>),
    Weighted(Vec<(f64, Vec<&'a Example>)>),
}

impl<'a> StepContext<'a> {
    fn effective_ratio(&self, base_ratio: f64) -> f64 {
        base_ratio * self.lr / self.cfg.lr
    }

    pub(crate) fn mixture_job(
        &self,
        side: Side,
        w: &SimplexWeights,
        size: usize,
        rng: &mut SeededSampler,
    ) -> Result<Job<'a>> {
        if self.cfg.full_batch {
            let sets = self.store.side(side);
            Ok(Job::Weighted(
                w.values()
                    .iter()
                    .zip(sets)
                    .filter(|(wi, _)| **wi > 0.0)
                    .map(|(wi, d)| (*wi, d.all()))
                    .collect(),
            ))
        } else {
            Ok(Job::Batch(self.store.sample_mixture_batch(side, w, size, rng.rng())?))
        }
    }

    pub(crate) fn dataset_jobs(&self, side: Side, size: usize, rng: &mut SeededSampler) -> Result<Vec<Job<'a>>> {
        let sets = self.store.side(side);
        if self.cfg.full_batch {
            Ok(sets.iter().map(|d| Job::Batch(d.all())).collect())
        } else {
            sets.iter()
                .map(|d| Ok(Job::Batch(d.sample(size, rng.rng())?)))
                .collect()
        }
    }

    pub(crate) fn run_jobs(&self, jobs: &[Job<'a>]) -> Result<Vec<(f64, GradientVector)>> {
        self.cfg.execution.try_map(jobs.len(), |i| match &jobs[i] {
            Job::Batch(b) => self.model.loss_and_grad(self.params, b),
            Job::Weighted(parts) => {
                let mut loss = 0.0;
                let mut grad = GradientVector::zeros(self.model.param_dim());
                for (w, b) in parts {
                    let (l, g) = self.model.loss_and_grad(self.params, b)?;
                    loss += w * l;
                    grad.axpy(*w, &g)?;
                }
                Ok((loss, grad))
            }
        })
    }
}

/// Scorer applied to a validation gradient before it is aligned.
fn scorer(algorithm: Algorithm, g: &GradientVector, loss: f64) -> GradientVector {
    match algorithm {
        Algorithm::GrapeGap => g.clone(),
        _ => g.clone().scaled(1.0 / loss.max(LOSS_FLOOR)),
    }
}

/// Task-weight update: scores each task by how well its gradient aligns with
/// a fresh training gradient `x ∼ mix(α)` and applies a descending
/// exponentiated step, so poorly served tasks gain weight.
pub fn task_reweight_step(
    ctx: &StepContext<'_>,
    z: &SimplexWeights,
    alpha: &SimplexWeights,
    ema: &mut TaskLossState,
    streams: &mut Streams,
    counter: &mut OverheadCounter,
) -> Result<StepOutput> {
    let n = ctx.store.num_tasks();
    let reps = ctx.cfg.eval_replicates as usize;
    let size = ctx.cfg.eval_batch_size();
    let mut raw = vec![0.0; n];
    let mut normalized = vec![0.0; n];
    let mut losses = vec![0.0; n];
    for _ in 0..reps {
        let mut jobs = ctx.dataset_jobs(Side::Tasks, size, &mut streams.task_batches)?;
        jobs.push(ctx.mixture_job(Side::Domains, alpha, size, &mut streams.reweight_train)?);
        let results = ctx.run_jobs(&jobs)?;
        let train_grad = &results[n].1;
        for (i, (l, g)) in results[..n].iter().enumerate() {
            let dot = g.dot(train_grad)?;
            raw[i] += dot;
            normalized[i] += dot / l.max(LOSS_FLOOR);
            losses[i] += l;
        }
        counter.task_grad_evals += n as u64 + 1;
    }
    let r = reps as f64;
    losses.iter_mut().for_each(|l| *l /= r);
    let scores: Vec<f64> = match ctx.cfg.algorithm {
        Algorithm::GrapeGap => raw.iter().map(|v| v / r).collect(),
        Algorithm::GrapeEma => (0..n)
            .map(|i| {
                let e = ema.observe(i, losses[i])?;
                Ok(raw[i] / r / e.max(LOSS_FLOOR))
            })
            .collect::<Result<_>>()?,
        _ => normalized.iter().map(|v| v / r).collect(),
    };
    let params = UpdateParams::descend(ctx.effective_ratio(ctx.cfg.step_ratio_z))?.with_floor(ctx.cfg.weight_floor)?;
    Ok(StepOutput {
        weights: z.multiplicative_update(&scores, params)?,
        scores,
        losses,
    })
}

/// Domain-weight update: scores each domain by the alignment of its gradient
/// with the task-weighted validation gradient and applies an ascending
/// exponentiated step.
pub fn domain_reweight_step(
    ctx: &StepContext<'_>,
    alpha: &SimplexWeights,
    z: &SimplexWeights,
    streams: &mut Streams,
    counter: &mut OverheadCounter,
) -> Result<StepOutput> {
    let k = ctx.store.num_domains();
    let reps = ctx.cfg.eval_replicates as usize;
    let size = ctx.cfg.eval_batch_size();
    let algorithm = ctx.cfg.algorithm;
    let per_task = algorithm == Algorithm::DogePcgrad || ctx.cfg.task_mix_mode == TaskMixMode::Expected;
    let mut scores = vec![0.0; k];
    let mut losses = vec![0.0; k];
    for _ in 0..reps {
        let mut jobs = ctx.dataset_jobs(Side::Domains, size, &mut streams.domain_batches)?;
        if per_task {
            jobs.extend(ctx.dataset_jobs(Side::Tasks, size, &mut streams.task_mixture)?);
        } else {
            jobs.push(ctx.mixture_job(Side::Tasks, z, size, &mut streams.task_mixture)?);
        }
        let results = ctx.run_jobs(&jobs)?;
        let (domain_results, target_results) = results.split_at(k);
        let target = if algorithm == Algorithm::DogePcgrad {
            let normalized: Vec<GradientVector> =
                target_results.iter().map(|(l, g)| scorer(algorithm, g, *l)).collect();
            pcgrad_combine(&normalized, streams.pcgrad.rng())?
        } else if per_task {
            let scored: Vec<GradientVector> = target_results.iter().map(|(l, g)| scorer(algorithm, g, *l)).collect();
            GradientVector::weighted_sum(z.values(), &scored)?
        } else {
            let (l, g) = &target_results[0];
            scorer(algorithm, g, *l)
        };
        for (i, (l, g)) in domain_results.iter().enumerate() {
            scores[i] += g.dot(&target)?;
            losses[i] += l;
        }
        counter.domain_grad_evals += (k + target_results.len()) as u64;
    }
    let r = reps as f64;
    scores.iter_mut().for_each(|s| *s /= r);
    losses.iter_mut().for_each(|l| *l /= r);
    let params =
        UpdateParams::ascend(ctx.effective_ratio(ctx.cfg.step_ratio_alpha))?.with_floor(ctx.cfg.weight_floor)?;
    Ok(StepOutput {
        weights: alpha.multiplicative_update(&scores, params)?,
        scores,
        losses,
    })
}
