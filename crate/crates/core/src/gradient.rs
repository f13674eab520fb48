use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{GrapeError, Result};

/// Flat gradient (or parameter) vector. Reweighting only ever needs inner
/// products and linear combinations of these, never their structure.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn zeros(dim: usize) -> Self {
        GradientVector(vec![0.0; dim])
    }

    pub fn dot(&self, other: &GradientVector) -> Result<f64> {
        check_len(self.len(), other.len())?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.0.iter_mut().for_each(|v| *v *= c);
        self
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &GradientVector) -> Result<()> {
        check_len(self.len(), other.len())?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Weighted sum `Σ w_i g_i`. All vectors must share a length.
    pub fn weighted_sum(weights: &[f64], grads: &[GradientVector]) -> Result<GradientVector> {
        check_len(weights.len(), grads.len())?;
        let dim = grads.first().map(|g| g.len()).unwrap_or(0);
        let mut out = GradientVector::zeros(dim);
        for (w, g) in weights.iter().zip(grads) {
            out.axpy(*w, g)?;
        }
        Ok(out)
    }
}

impl Deref for GradientVector {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for GradientVector {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

impl From<Vec<f64>> for GradientVector {
    fn from(v: Vec<f64>) -> Self {
        GradientVector(v)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(GrapeError::DimensionError { expected, got })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_algebra_basics() {
        let mut a = GradientVector(vec![1.0, 2.0]);
        let b = GradientVector(vec![3.0, -1.0]);
        assert_eq!(a.dot(&b).unwrap(), 1.0);
        a.axpy(2.0, &b).unwrap();
        assert_eq!(a.0, vec![7.0, 0.0]);
        assert_eq!(b.norm_sq(), 10.0);
        let s = GradientVector::weighted_sum(&[0.5, 0.5], &[a, b]).unwrap();
        assert_eq!(s.0, vec![5.0, -0.5]);
    }

    #[test]
    fn mismatched_lengths() {
        let a = GradientVector(vec![1.0]);
        let b = GradientVector(vec![1.0, 2.0]);
        assert!(matches!(
            a.dot(&b),
            Err(GrapeError::DimensionError { expected: 1, got: 2 })
        ));
    }
}
