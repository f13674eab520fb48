//! Source-domain and target-task datasets and the samplers that draw from
//! them.
//!
//! Every stochastic consumer owns its own [`SeededSampler`] stream, so
//! enabling one feature (say PCGrad ordering) never perturbs another's draws.

mod ingest;
mod markov;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GrapeError, Result};
use crate::simplex::SimplexWeights;

pub use ingest::{ingest_dataset, write_dataset, Record, Target};
pub use markov::{generate_markov_corpus, windows, MarkovLanguageSpec};

/// One training or validation example. Each built-in model accepts one kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Example {
    /// Token ids of a character sequence.
    Tokens(Vec<u32>),
    /// Feature vector with a class index or target distribution.
    Features { x: Vec<f64>, y: Target },
    /// Draw from the quadratic family: loss
    /// `Σ_n mix_n · ½ Σ_i c_ni (θ_i − θ*_ni − offset_i)²`.
    Quadratic { mix: Vec<f64>, offset: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, examples: Vec<Example>) -> Result<Self> {
        if examples.is_empty() {
            return Err(GrapeError::EmptyDataset(None));
        }
        Ok(Dataset {
            name: name.into(),
            examples,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn all(&self) -> Vec<&Example> {
        self.examples.iter().collect()
    }

    /// `size` uniform draws with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, size: usize, rng: &mut R) -> Result<Vec<&'a Example>> {
        if size == 0 {
            return Err(GrapeError::EmptyBatch);
        }
        Ok((0..size)
            .map(|_| &self.examples[rng.random_range(0..self.examples.len())])
            .collect())
    }
}

/// Which side of the store a set of weights refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Domains,
    Tasks,
}

/// `K` source domains and `N` target tasks.
#[derive(Clone, Debug)]
pub struct MixtureStore {
    domains: Vec<Dataset>,
    tasks: Vec<Dataset>,
}

impl MixtureStore {
    pub fn new(domains: Vec<Dataset>, tasks: Vec<Dataset>) -> Result<Self> {
        if domains.is_empty() || tasks.is_empty() {
            return Err(GrapeError::ConfigError("need at least one domain and one task".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for d in domains.iter().chain(&tasks) {
            if d.is_empty() {
                return Err(GrapeError::EmptyDataset(None));
            }
            if !seen.insert(d.name.as_str()) {
                return Err(GrapeError::ConfigError(format!("duplicate dataset label `{}`", d.name)));
            }
        }
        Ok(MixtureStore { domains, tasks })
    }

    pub fn domains(&self) -> &[Dataset] {
        &self.domains
    }

    pub fn tasks(&self) -> &[Dataset] {
        &self.tasks
    }

    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn domain_labels(&self) -> Vec<String> {
        self.domains.iter().map(|d| d.name.clone()).collect()
    }

    pub fn task_labels(&self) -> Vec<String> {
        self.tasks.iter().map(|d| d.name.clone()).collect()
    }

    pub fn side(&self, side: Side) -> &[Dataset] {
        match side {
            Side::Domains => &self.domains,
            Side::Tasks => &self.tasks,
        }
    }

    /// Per-example mixture draw: a dataset index from `categorical(w)`, then a
    /// uniform example from that dataset.
    pub fn sample_mixture_batch<'a, R: Rng + ?Sized>(
        &'a self,
        side: Side,
        w: &SimplexWeights,
        size: usize,
        rng: &mut R,
    ) -> Result<Vec<&'a Example>> {
        let sets = self.side(side);
        if w.len() != sets.len() {
            return Err(GrapeError::DimensionError {
                expected: sets.len(),
                got: w.len(),
            });
        }
        if size == 0 {
            return Err(GrapeError::EmptyBatch);
        }
        let picker = WeightedIndex::new(w.values()).map_err(|e| GrapeError::DegenerateWeights(e.to_string()))?;
        Ok((0..size)
            .map(|_| {
                let set = &sets[picker.sample(rng)];
                &set.examples[rng.random_range(0..set.len())]
            })
            .collect())
    }

    /// One uniform batch from each domain, in domain order.
    pub fn sample_domain_batches<'a, R: Rng + ?Sized>(
        &'a self,
        size: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<&'a Example>>> {
        self.domains.iter().map(|d| d.sample(size, rng)).collect()
    }

    /// One uniform batch from each task, in task order.
    pub fn sample_task_batches<'a, R: Rng + ?Sized>(
        &'a self,
        size: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<&'a Example>>> {
        self.tasks.iter().map(|d| d.sample(size, rng)).collect()
    }
}

/// Independent random streams consumed by the training loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    /// Training batches `x ∼ mix(α)`.
    Train = 1,
    /// Fresh training batch drawn at each task-reweight step.
    ReweightTrain = 2,
    /// Per-task batches at task-reweight steps.
    TaskBatches = 3,
    /// Per-domain batches at domain-reweight steps.
    DomainBatches = 4,
    /// Mixed validation batch `y ∼ mix(z)` at domain-reweight steps.
    TaskMixture = 5,
    /// PCGrad processing order.
    PcGrad = 6,
    /// Synthetic data generation.
    Synthetic = 7,
    /// Free for harnesses and tests.
    Auxiliary = 8,
}

/// A ChaCha8 generator keyed by `(seed, stream)`.
#[derive(Clone, Debug)]
pub struct SeededSampler {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl SeededSampler {
    pub fn new(seed: u64, stream: Stream) -> Self {
        Self::with_stream_id(seed, stream as u64)
    }

    pub fn with_stream_id(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        SeededSampler { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(k: usize, n: usize) -> MixtureStore {
        let mk = |prefix: &str, i: usize| {
            let examples = (0..5).map(|j| Example::Tokens(vec![i as u32, j as u32])).collect();
            Dataset::new(format!("{prefix}{i}"), examples).unwrap()
        };
        MixtureStore::new(
            (0..k).map(|i| mk("d", i)).collect(),
            (0..n).map(|i| mk("t", i)).collect(),
        )
        .unwrap()
    }

    fn origin(e: &Example) -> u32 {
        match e {
            Example::Tokens(t) => t[0],
            _ => unreachable!(),
        }
    }

    #[test]
    fn one_hot_mixture_draws_single_domain() {
        let s = store(3, 1);
        let w = SimplexWeights::one_hot(s.domain_labels(), 2).unwrap();
        let mut rng = SeededSampler::new(1, Stream::Train);
        let batch = s.sample_mixture_batch(Side::Domains, &w, 50, rng.rng()).unwrap();
        assert!(batch.iter().all(|e| origin(e) == 2));
    }

    #[test]
    fn uniform_mixture_passes_chi_square() {
        let s = store(4, 1);
        let w = SimplexWeights::uniform(s.domain_labels()).unwrap();
        let mut rng = SeededSampler::new(7, Stream::Train);
        let batch = s.sample_mixture_batch(Side::Domains, &w, 10_000, rng.rng()).unwrap();
        let mut counts = [0f64; 4];
        batch.iter().for_each(|e| counts[origin(e) as usize] += 1.0);
        let chi2: f64 = counts.iter().map(|c| (c - 2500.0).powi(2) / 2500.0).sum();
        // 3 degrees of freedom: P(χ² > 16.27) = 0.001.
        assert!(chi2 < 16.27, "chi2 {chi2}, counts {counts:?}");
    }

    #[test]
    fn mixture_marginals_within_four_standard_errors() {
        let s = store(3, 1);
        let w = SimplexWeights::normalize(&[0.1, 0.3, 0.6]).unwrap();
        let mut rng = SeededSampler::new(11, Stream::Train);
        let batch = s.sample_mixture_batch(Side::Domains, &w, 10_000, rng.rng()).unwrap();
        let mut counts = [0f64; 3];
        batch.iter().for_each(|e| counts[origin(e) as usize] += 1.0);
        for (c, p) in counts.iter().zip(w.values()) {
            let se = (p * (1.0 - p) / 10_000.0).sqrt();
            assert!((c / 10_000.0 - p).abs() <= 4.0 * se);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let s = store(3, 2);
        let w = SimplexWeights::uniform(s.task_labels()).unwrap();
        let draw = |seed| {
            let mut rng = SeededSampler::new(seed, Stream::TaskMixture);
            s.sample_mixture_batch(Side::Tasks, &w, 20, rng.rng())
                .unwrap()
                .into_iter()
                .cloned()
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn streams_are_independent() {
        let mut a = SeededSampler::new(3, Stream::Train);
        let mut b = SeededSampler::new(3, Stream::PcGrad);
        let xa: Vec<u64> = (0..4).map(|_| a.rng().random()).collect();
        let xb: Vec<u64> = (0..4).map(|_| b.rng().random()).collect();
        assert_ne!(xa, xb);
    }

    #[test]
    fn per_side_batches() {
        let s = store(3, 1);
        let mut rng = SeededSampler::new(0, Stream::DomainBatches);
        let batches = s.sample_domain_batches(4, rng.rng()).unwrap();
        assert_eq!(batches.len(), 3);
        for (i, b) in batches.iter().enumerate() {
            assert_eq!(b.len(), 4);
            assert!(b.iter().all(|e| origin(e) == i as u32));
        }
        let single = store(1, 1);
        assert_eq!(single.sample_task_batches(2, rng.rng()).unwrap().len(), 1);
    }

    #[test]
    fn empty_batches_and_bad_stores_are_rejected() {
        let s = store(2, 1);
        let w = SimplexWeights::uniform(s.domain_labels()).unwrap();
        let mut rng = SeededSampler::new(0, Stream::Train);
        assert!(matches!(
            s.sample_mixture_batch(Side::Domains, &w, 0, rng.rng()),
            Err(GrapeError::EmptyBatch)
        ));
        let wrong = SimplexWeights::uniform(vec!["a".into()]).unwrap();
        assert!(s.sample_mixture_batch(Side::Domains, &wrong, 3, rng.rng()).is_err());
        let d = Dataset::new("x", vec![Example::Tokens(vec![0])]).unwrap();
        assert!(MixtureStore::new(vec![d.clone()], vec![d.clone()]).is_err());
        assert!(MixtureStore::new(vec![], vec![d]).is_err());
        assert!(Dataset::new("e", vec![]).is_err());
    }
}
