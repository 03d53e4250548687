//! Value-only kernels. The tape uses these for its forward pass.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn relu_values<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter()
        .map(|&v| if v > T::zero() { v } else { T::zero() })
        .collect()
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax_values<T: Scalar>(logits: &[T]) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(Error::Dimension("softmax of an empty array".into()));
    }
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::NumericInput(format!("softmax logit {bad}")));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total = out.iter().copied().fold(T::zero(), |a, b| a + b);
    for v in &mut out {
        *v /= total;
    }
    Ok(out)
}

pub fn log_softmax_values<T: Scalar>(logits: &[T]) -> Result<Vec<T>> {
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::NumericInput(format!("log-softmax logit {bad}")));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits
        .iter()
        .map(|&v| (v - max).exp())
        .fold(T::zero(), |a, b| a + b)
        .ln()
        + max;
    Ok(logits.iter().map(|&v| v - lse).collect())
}

/// `sum_i t_i ln(t_i / max(p_i, floor))`, with `0 ln(0/q) = 0`.
pub fn kl_div_values<T: Scalar>(target: &[T], pred: &[T]) -> T {
    let floor = T::prob_floor();
    target
        .iter()
        .zip(pred)
        .filter(|(t, _)| **t > T::zero())
        .map(|(&t, &p)| t * (t.ln() - p.max(floor).ln()))
        .fold(T::zero(), |a, b| a + b)
}
