use serde::{Deserialize, Serialize};

use super::{check_call, DifferentiableModel};
use crate::data::Example;
use crate::error::{GrapeError, Result};
use crate::gradient::GradientVector;

/// Bigram character model: a `V×V` table of next-symbol logits, flattened
/// row-major. Loss is the mean negative log-likelihood per predicted symbol,
/// i.e. the log-perplexity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharLmModel {
    vocab: usize,
}

impl CharLmModel {
    pub fn new(vocab: usize) -> Result<Self> {
        if vocab == 0 {
            return Err(GrapeError::ConfigError("vocabulary must be non-empty".into()));
        }
        Ok(CharLmModel { vocab })
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    /// Bigram counts of the batch and the number of predicted symbols.
    fn counts(&self, batch: &[&Example]) -> Result<(Vec<f64>, f64)> {
        let v = self.vocab;
        let mut counts = vec![0.0; v * v];
        let mut total = 0.0;
        for e in batch {
            let Example::Tokens(tokens) = e else {
                return Err(GrapeError::IncompatibleExample {
                    model: "char_lm",
                    detail: "expected a token sequence".into(),
                });
            };
            if let Some(t) = tokens.iter().find(|t| **t as usize >= v) {
                return Err(GrapeError::IncompatibleExample {
                    model: "char_lm",
                    detail: format!("token {t} outside vocabulary of {v}"),
                });
            }
            for p in tokens.windows(2) {
                counts[p[0] as usize * v + p[1] as usize] += 1.0;
                total += 1.0;
            }
        }
        if total == 0.0 {
            return Err(GrapeError::EmptyBatch);
        }
        Ok((counts, total))
    }

    /// Row-wise softmax of the logit table.
    pub fn probabilities(&self, params: &[f64]) -> Vec<Vec<f64>> {
        params
            .chunks(self.vocab)
            .map(|row| {
                let lse = log_sum_exp(row);
                row.iter().map(|l| (l - lse).exp()).collect()
            })
            .collect()
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

impl DifferentiableModel for CharLmModel {
    fn name(&self) -> &'static str {
        "char_lm"
    }

    fn param_dim(&self) -> usize {
        self.vocab * self.vocab
    }

    fn loss(&self, params: &[f64], batch: &[&Example]) -> Result<f64> {
        check_call(self, params, batch)?;
        let (counts, total) = self.counts(batch)?;
        let v = self.vocab;
        let mut nll = 0.0;
        for (a, row) in params.chunks(v).enumerate() {
            let row_counts = &counts[a * v..(a + 1) * v];
            if row_counts.iter().all(|c| *c == 0.0) {
                continue;
            }
            let lse = log_sum_exp(row);
            for (c, l) in row_counts.iter().zip(row) {
                nll += c * (lse - l);
            }
        }
        Ok(nll / total)
    }

    fn loss_and_grad(&self, params: &[f64], batch: &[&Example]) -> Result<(f64, GradientVector)> {
        check_call(self, params, batch)?;
        let (counts, total) = self.counts(batch)?;
        let v = self.vocab;
        let mut nll = 0.0;
        let mut g = vec![0.0; v * v];
        for (a, row) in params.chunks(v).enumerate() {
            let row_counts = &counts[a * v..(a + 1) * v];
            let n_a: f64 = row_counts.iter().sum();
            if n_a == 0.0 {
                continue;
            }
            let lse = log_sum_exp(row);
            for b in 0..v {
                let p = (row[b] - lse).exp();
                nll += row_counts[b] * (lse - row[b]);
                g[a * v + b] = (n_a * p - row_counts[b]) / total;
            }
        }
        Ok((nll / total, GradientVector(g)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SeededSampler, Stream};
    use crate::model::finite_diff_check;
    use rand::Rng;

    #[test]
    fn uniform_logits_give_log_vocab() {
        let m = CharLmModel::new(4).unwrap();
        let e = Example::Tokens(vec![0, 3, 2, 2, 1]);
        let l = m.loss(&m.init_params(), &[&e]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_pair_gradient_is_softmax_minus_one_hot() {
        let m = CharLmModel::new(3).unwrap();
        let e = Example::Tokens(vec![0, 1]);
        let g = m.grad(&m.init_params(), &[&e]).unwrap();
        let third = 1.0 / 3.0;
        assert!((g[0] - third).abs() < 1e-15);
        assert!((g[1] - (third - 1.0)).abs() < 1e-15);
        assert!(g[0..3].iter().sum::<f64>().abs() < 1e-15);
        assert!(g[3..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = CharLmModel::new(4).unwrap();
        let mut rng = SeededSampler::new(5, Stream::Auxiliary);
        let params: Vec<f64> = (0..16).map(|_| rng.rng().random_range(-2.0..2.0)).collect();
        let e1 = Example::Tokens(vec![0, 1, 2, 3, 3, 0]);
        let e2 = Example::Tokens(vec![2, 1, 1]);
        let err = finite_diff_check(&m, &params, &[&e1, &e2], 1e-5).unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn rejects_out_of_vocabulary_and_pairless_batches() {
        let m = CharLmModel::new(2).unwrap();
        let p = m.init_params();
        assert!(m.loss(&p, &[&Example::Tokens(vec![0, 2])]).is_err());
        assert!(matches!(
            m.loss(&p, &[&Example::Tokens(vec![1])]),
            Err(GrapeError::EmptyBatch)
        ));
    }
}
