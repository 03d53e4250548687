use std::ops::Deref;

use crate::autodiff::softmax_values;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A discrete distribution over `C >= 1` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector<T>(Vec<T>);

impl<T: Scalar> ProbVector<T> {
    /// Validates non-negativity and unit mass.
    pub fn new(p: Vec<T>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Dimension("empty probability vector".into()));
        }
        if p.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::NumericInput(format!("{p:?} is not a distribution")));
        }
        let total = p.iter().copied().fold(T::zero(), |a, b| a + b);
        if (total - T::one()).abs() > T::sum_tolerance(p.len()) {
            return Err(Error::NumericInput(format!("probabilities sum to {total}")));
        }
        Ok(Self(p))
    }

    pub fn from_logits(logits: &[T]) -> Result<Self> {
        softmax_values(logits).map(Self)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![T::one() / T::of(n as f64); n])
    }

    pub fn argmax(&self) -> usize {
        predicted_class(&self.0)
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for ProbVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Index of the largest probability; ties go to the lowest index.
pub fn predicted_class<T: PartialOrd + Copy>(p: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate().skip(1) {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_examples() {
        assert_eq!(predicted_class(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(predicted_class(&[0.5, 0.5]), 0);
        assert_eq!(predicted_class(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn rejects_bad_mass() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![1.2, -0.2]).is_err());
        assert!(ProbVector::<f64>::new(vec![]).is_err());
        assert!(ProbVector::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn deref_to_slice() {
        let p = ProbVector::<f64>::uniform(4);
        assert_eq!(p.len(), 4);
        assert_eq!(p.argmax(), 0);
    }
}
