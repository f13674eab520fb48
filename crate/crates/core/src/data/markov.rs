use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Example;
use crate::error::{GrapeError, Result};

const ROW_TOLERANCE: f64 = 1e-9;

/// A first-order Markov "language" over a vocabulary of `V` symbols.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovLanguageSpec {
    transitions: Vec<Vec<f64>>,
}

impl MarkovLanguageSpec {
    pub fn new(transitions: Vec<Vec<f64>>) -> Result<Self> {
        let v = transitions.len();
        if v == 0 {
            return Err(GrapeError::SpecError("empty vocabulary".into()));
        }
        for (a, row) in transitions.iter().enumerate() {
            if row.len() != v {
                return Err(GrapeError::SpecError(format!(
                    "row {a} has {} entries, expected {v}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(GrapeError::SpecError(format!(
                    "row {a} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(GrapeError::SpecError(format!("row {a} sums to {sum}")));
            }
        }
        Ok(MarkovLanguageSpec { transitions })
    }

    pub fn uniform(vocab: usize) -> Result<Self> {
        Self::new(vec![vec![1.0 / vocab as f64; vocab]; vocab])
    }

    /// Deterministic chain `a → perm[a]`.
    pub fn permutation(perm: &[usize]) -> Result<Self> {
        let v = perm.len();
        let mut t = vec![vec![0.0; v]; v];
        for (a, &b) in perm.iter().enumerate() {
            if b >= v {
                return Err(GrapeError::SpecError(format!("successor {b} out of range")));
            }
            t[a][b] = 1.0;
        }
        Self::new(t)
    }

    /// Rows are softmaxes of Gaussian logits scaled by `sharpness`; larger
    /// values give more predictable languages.
    pub fn random<R: Rng + ?Sized>(vocab: usize, sharpness: f64, rng: &mut R) -> Result<Self> {
        let t = (0..vocab)
            .map(|_| {
                let logits: Vec<f64> = (0..vocab)
                    .map(|_| sharpness * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|x| x / s).collect()
            })
            .collect();
        Self::new(t)
    }

    /// Row-wise convex combination `Σ w_j P_j` of related languages.
    pub fn mixture(components: &[(f64, &MarkovLanguageSpec)]) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| GrapeError::SpecError("empty mixture".into()))?
            .1;
        let v = first.vocab();
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if components.iter().any(|(w, s)| *w < 0.0 || s.vocab() != v) || !(total > 0.0) {
            return Err(GrapeError::SpecError(
                "mixture weights must be non-negative over equal vocabularies".into(),
            ));
        }
        let mut t = vec![vec![0.0; v]; v];
        for (w, spec) in components {
            for (row, src) in t.iter_mut().zip(&spec.transitions) {
                for (p, q) in row.iter_mut().zip(src) {
                    *p += w / total * q;
                }
            }
        }
        Self::new(t)
    }

    pub fn vocab(&self) -> usize {
        self.transitions.len()
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.transitions
    }

    /// Stationary distribution by power iteration on the lazy chain.
    pub fn stationary(&self) -> Vec<f64> {
        let v = self.vocab();
        let mut pi = vec![1.0 / v as f64; v];
        for _ in 0..100_000 {
            let mut next = vec![0.0; v];
            for (a, row) in self.transitions.iter().enumerate() {
                for (b, p) in row.iter().enumerate() {
                    next[b] += pi[a] * p;
                }
            }
            // Lazy step keeps periodic chains convergent.
            let next: Vec<f64> = next.iter().zip(&pi).map(|(n, p)| 0.5 * (n + p)).collect();
            let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if delta < 1e-15 {
                break;
            }
        }
        pi
    }

    /// Cross-entropy per symbol of this chain's text under bigram model `q`,
    /// `Σ_a π_a Σ_b P_ab (−ln q_ab)`.
    pub fn cross_entropy(&self, q: &[Vec<f64>]) -> f64 {
        let pi = self.stationary();
        let mut h = 0.0;
        for (a, row) in self.transitions.iter().enumerate() {
            for (b, p) in row.iter().enumerate() {
                if *p > 0.0 {
                    h -= pi[a] * p * q[a][b].ln();
                }
            }
        }
        h
    }

    /// Entropy rate: the loss of the best bigram model of this language.
    pub fn entropy_rate(&self) -> f64 {
        self.cross_entropy(&self.transitions)
    }
}

/// Samples `length` symbols; the first uniformly, the rest from the chain.
pub fn generate_markov_corpus<R: Rng + ?Sized>(
    spec: &MarkovLanguageSpec,
    length: usize,
    rng: &mut R,
) -> Result<Vec<u32>> {
    if length < 2 {
        return Err(GrapeError::SpecError("corpus length must be at least 2".into()));
    }
    let rows = spec
        .transitions
        .iter()
        .map(|r| WeightedIndex::new(r).map_err(|e| GrapeError::SpecError(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(length);
    let mut cur = rng.random_range(0..spec.vocab());
    out.push(cur as u32);
    for _ in 1..length {
        cur = rows[cur].sample(rng);
        out.push(cur as u32);
    }
    Ok(out)
}

/// Splits a token stream into consecutive windows of `window` tokens that
/// overlap by one, so every bigram of the stream appears exactly once.
pub fn windows(tokens: &[u32], window: usize) -> Vec<Example> {
    let window = window.max(2);
    let mut out = Vec::new();
    let mut start = 0;
    while start + 1 < tokens.len() {
        let end = (start + window).min(tokens.len());
        out.push(Example::Tokens(tokens[start..end].to_vec()));
        start = end - 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SeededSampler, Stream};

    #[test]
    fn permutation_chain_is_cyclic() {
        let spec = MarkovLanguageSpec::permutation(&[1, 2, 3, 0]).unwrap();
        let mut rng = SeededSampler::new(0, Stream::Synthetic);
        let text = generate_markov_corpus(&spec, 50, rng.rng()).unwrap();
        for pair in text.windows(2) {
            assert_eq!(pair[1], (pair[0] + 1) % 4);
        }
    }

    #[test]
    fn uniform_chain_empirical_transitions() {
        let spec = MarkovLanguageSpec::uniform(4).unwrap();
        let mut rng = SeededSampler::new(1, Stream::Synthetic);
        let text = generate_markov_corpus(&spec, 100_000, rng.rng()).unwrap();
        let mut counts = [[0f64; 4]; 4];
        for p in text.windows(2) {
            counts[p[0] as usize][p[1] as usize] += 1.0;
        }
        for row in counts {
            let total: f64 = row.iter().sum();
            for c in row {
                assert!((c / total - 0.25).abs() <= 0.02);
            }
        }
    }

    #[test]
    fn mixture_entropy_rate_matches_monte_carlo_nll() {
        let mut rng = SeededSampler::new(2, Stream::Synthetic);
        let a = MarkovLanguageSpec::random(5, 2.0, rng.rng()).unwrap();
        let b = MarkovLanguageSpec::random(5, 2.0, rng.rng()).unwrap();
        let target = MarkovLanguageSpec::mixture(&[(0.5, &a), (0.5, &b)]).unwrap();
        let text = generate_markov_corpus(&target, 200_000, rng.rng()).unwrap();
        let t = target.transitions();
        let nll: f64 = text
            .windows(2)
            .map(|p| -t[p[0] as usize][p[1] as usize].ln())
            .sum::<f64>()
            / (text.len() - 1) as f64;
        assert!(
            (nll - target.entropy_rate()).abs() < 0.01,
            "{nll} vs {}",
            target.entropy_rate()
        );
        // Any other model does worse.
        assert!(target.cross_entropy(a.transitions()) > target.entropy_rate());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(MarkovLanguageSpec::new(vec![vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
        assert!(MarkovLanguageSpec::new(vec![vec![1.0]]).is_ok());
        assert!(MarkovLanguageSpec::new(vec![vec![1.0, 0.0]]).is_err());
        let spec = MarkovLanguageSpec::uniform(2).unwrap();
        let mut rng = SeededSampler::new(0, Stream::Synthetic);
        assert!(generate_markov_corpus(&spec, 1, rng.rng()).is_err());
    }

    #[test]
    fn windows_cover_every_bigram_once() {
        let tokens: Vec<u32> = (0..10).collect();
        let w = windows(&tokens, 4);
        let pairs: usize = w
            .iter()
            .map(|e| match e {
                Example::Tokens(t) => t.len() - 1,
                _ => 0,
            })
            .sum();
        assert_eq!(pairs, 9);
    }
}
