//! Canned instances used by the verification suites, the acceptance tests
//! and the benchmarks.

use crate::data::{
    generate_markov_corpus, windows, Dataset, Example, MarkovLanguageSpec, MixtureStore, SeededSampler, Stream,
};
use crate::error::Result;
use crate::model::{CharLmModel, MinimaxSolution, QuadraticFamily};
use crate::reweight::{Algorithm, InitialState, OptimizerConfig, ReweightConfig, TaskMixMode};
use crate::simplex::SimplexWeights;

/// A quadratic task family with one noise-free domain per task.
#[derive(Clone, Debug)]
pub struct QuadraticScenario {
    pub family: QuadraticFamily,
    pub store: MixtureStore,
    pub config: ReweightConfig,
    pub init: InitialState,
    pub optimum: MinimaxSolution,
}

/// Domain `k` holds exactly task `k`'s loss, so a domain mixture is a task
/// mixture and every point of the Pareto front is reachable.
fn aligned_store(family: &QuadraticFamily) -> Result<MixtureStore> {
    let sets = |prefix: &str| {
        (0..family.num_tasks())
            .map(|n| Dataset::new(format!("{prefix}{n}"), vec![family.task_example(n)]))
            .collect::<Result<Vec<_>>>()
    };
    MixtureStore::new(sets("domain")?, sets("task")?)
}

/// Deterministic full-batch GRAPE with per-step updates and `γ = 1/L` on
/// three random 2-D quadratics with curvatures in `[0.5, 2]`.
pub fn theorem_instance(seed: u64) -> Result<QuadraticScenario> {
    let mut rng = SeededSampler::new(seed, Stream::Synthetic);
    let family = QuadraticFamily::random(3, 2, 0.5, 2.0, 1.0, rng.rng())?;
    let store = aligned_store(&family)?;
    let config = ReweightConfig {
        algorithm: Algorithm::Grape,
        total_steps: 5000,
        lr: 1.0 / family.smoothness(),
        update_every_alpha: 1,
        update_every_z: 1,
        eval_every: 1,
        full_batch: true,
        task_mix_mode: TaskMixMode::Expected,
        ..ReweightConfig::default()
    };
    let init = InitialState::uniform(&family, &store)?;
    let optimum = family.minimax_optimum(1e-12);
    Ok(QuadraticScenario {
        family,
        store,
        config,
        init,
        optimum,
    })
}

/// [`theorem_instance`] started at `(-3, 3)`, far from every optimum and at
/// very different distances from each.
pub fn variance_instance(seed: u64) -> Result<QuadraticScenario> {
    let mut s = theorem_instance(seed)?;
    s.init.params = vec![-3.0, 3.0];
    Ok(s)
}

/// Two tasks whose optima sit on orthogonal axes; both domains pull mostly
/// toward task 0, so task 1 keeps improving more slowly. The initial scores
/// differ by about 1.2, so the default z ratio of 10 would saturate `z` on
/// the first update; 0.1 keeps every update visible.
pub fn prioritization_instance() -> Result<QuadraticScenario> {
    let family = QuadraticFamily::new(
        vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
    )?;
    let domain = |name: &str, w: f64| {
        Dataset::new(
            name,
            vec![Example::Quadratic {
                mix: vec![w, 1.0 - w],
                offset: vec![0.0, 0.0],
            }],
        )
    };
    let tasks = (0..2)
        .map(|n| Dataset::new(format!("task{n}"), vec![family.task_example(n)]))
        .collect::<Result<Vec<_>>>()?;
    let store = MixtureStore::new(vec![domain("mostly0", 0.9)?, domain("leaning0", 0.7)?], tasks)?;
    let config = ReweightConfig {
        algorithm: Algorithm::Grape,
        total_steps: 200,
        lr: 0.05,
        step_ratio_z: 0.1,
        update_every_alpha: 10,
        update_every_z: 10,
        eval_every: 10,
        full_batch: true,
        task_mix_mode: TaskMixMode::Expected,
        ..ReweightConfig::default()
    };
    let init = InitialState::uniform(&family, &store)?;
    let optimum = family.minimax_optimum(1e-12);
    Ok(QuadraticScenario {
        family,
        store,
        config,
        init,
        optimum,
    })
}

/// Synthetic stand-in for multilingual pretraining: source languages are
/// random Markov chains and each target language is a known row-wise
/// mixture of them.
#[derive(Clone, Debug)]
pub struct MultilingualScenario {
    pub model: CharLmModel,
    pub store: MixtureStore,
    pub config: ReweightConfig,
    pub sources: Vec<MarkovLanguageSpec>,
    pub targets: Vec<MarkovLanguageSpec>,
    pub seed: u64,
}

pub const MULTILINGUAL_VOCAB: usize = 8;

/// Mixture weights of the three targets over the four sources. The last
/// source feeds no target, and the third target draws on a single source.
pub const MULTILINGUAL_TARGETS: [[f64; 4]; 3] = [[0.6, 0.4, 0.0, 0.0], [0.0, 0.5, 0.5, 0.0], [0.0, 0.0, 1.0, 0.0]];

pub fn multilingual_instance(seed: u64, algorithm: Algorithm) -> Result<MultilingualScenario> {
    let v = MULTILINGUAL_VOCAB;
    let mut lang_rng = SeededSampler::with_stream_id(seed, (Stream::Synthetic as u64) << 32);
    let sources = (0..4)
        .map(|_| MarkovLanguageSpec::random(v, 2.0, lang_rng.rng()))
        .collect::<Result<Vec<_>>>()?;
    let targets = MULTILINGUAL_TARGETS
        .iter()
        .map(|w| {
            let parts: Vec<(f64, &MarkovLanguageSpec)> = w.iter().copied().zip(&sources).collect();
            MarkovLanguageSpec::mixture(&parts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut corpus_rng = SeededSampler::with_stream_id(seed, ((Stream::Synthetic as u64) << 32) | 1);
    let mut dataset = |name: String, spec: &MarkovLanguageSpec, length: usize| -> Result<Dataset> {
        let tokens = generate_markov_corpus(spec, length, corpus_rng.rng())?;
        Dataset::new(name, windows(&tokens, 16))
    };
    let domains = sources
        .iter()
        .enumerate()
        .map(|(i, s)| dataset(format!("source{i}"), s, 20_000))
        .collect::<Result<Vec<_>>>()?;
    let tasks = targets
        .iter()
        .enumerate()
        .map(|(i, s)| dataset(format!("target{i}"), s, 3_000))
        .collect::<Result<Vec<_>>>()?;
    let config = ReweightConfig {
        algorithm,
        total_steps: 20_000,
        lr: 0.02,
        optimizer: OptimizerConfig::adamw(),
        train_batch_size: 8,
        eval_batch_size: Some(128),
        eval_replicates: 8,
        eval_every: 1000,
        ..ReweightConfig::default()
    };
    Ok(MultilingualScenario {
        model: CharLmModel::new(v)?,
        store: MixtureStore::new(domains, tasks)?,
        config,
        sources,
        targets,
        seed,
    })
}

impl MultilingualScenario {
    pub fn initial_state(&self) -> Result<InitialState> {
        InitialState::uniform(&self.model, &self.store)
    }

    /// Exact per-symbol cross-entropy of each target language under the
    /// model, free of validation-sample noise.
    pub fn target_nll(&self, params: &[f64]) -> Vec<f64> {
        let q = self.model.probabilities(params);
        self.targets.iter().map(|t| t.cross_entropy(&q)).collect()
    }

    pub fn uniform_alpha(&self) -> Result<SimplexWeights> {
        SimplexWeights::uniform(self.store.domain_labels())
    }
}
