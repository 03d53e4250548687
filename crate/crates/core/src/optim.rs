//! SGD with momentum and L2 weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Mlp;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Apply weight decay to bias vectors as well as weight matrices.
    pub decay_biases: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            momentum: 0.9,
            weight_decay: 5e-4,
            decay_biases: true,
        }
    }
}

/// Velocity buffers, one per parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub velocity: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn for_model(model: &Mlp<T>) -> Self {
        Self {
            velocity: model
                .param_arrays()
                .iter()
                .map(|a| vec![T::zero(); a.len()])
                .collect(),
        }
    }
}

/// `g' = grad + wd param; v = momentum v + g'; param -= lr v`.
pub fn sgd_step<T: Scalar>(
    param: &mut [T],
    grad: &[T],
    velocity: &mut [T],
    lr: T,
    momentum: T,
    weight_decay: T,
) -> Result<()> {
    if param.len() != grad.len() || param.len() != velocity.len() {
        return Err(Error::Dimension(format!(
            "sgd: param {}, grad {}, velocity {}",
            param.len(),
            grad.len(),
            velocity.len()
        )));
    }
    if let Some(bad) = grad.iter().find(|g| !g.is_finite()) {
        return Err(Error::NumericInput(format!("gradient entry {bad}")));
    }
    for ((p, g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        let g = *g + weight_decay * *p;
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}

/// One update of every parameter array of `model`.
pub fn sgd_update<T: Scalar>(
    model: &mut Mlp<T>,
    grads: &[Vec<T>],
    state: &mut OptimizerState<T>,
    cfg: &SgdConfig,
) -> Result<()> {
    let mut params = model.param_arrays_mut();
    if grads.len() != params.len() || state.velocity.len() != params.len() {
        return Err(Error::Dimension(format!(
            "{} gradient arrays for {} parameter arrays",
            grads.len(),
            params.len()
        )));
    }
    let (lr, momentum) = (T::of(cfg.lr), T::of(cfg.momentum));
    for (i, ((p, g), v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.velocity.iter_mut())
        .enumerate()
    {
        // arrays alternate weights, bias
        let is_bias = i % 2 == 1;
        let wd = if is_bias && !cfg.decay_biases {
            T::zero()
        } else {
            T::of(cfg.weight_decay)
        };
        sgd_step(p, g, v, lr, momentum, wd)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = vec![1.5, -2.0];
        let mut v = vec![0.0, 0.0];
        sgd_step(&mut p, &[0.0, 0.0], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
    }

    #[test]
    fn plain_gradient_descent_without_momentum() {
        let mut p = vec![1.0, 2.0];
        let mut v = vec![0.0, 0.0];
        sgd_step(&mut p, &[0.5, -1.0], &mut v, 0.1, 0.0, 0.0).unwrap();
        assert_eq!(p, vec![1.0 - 0.1 * 0.5, 2.0 + 0.1]);
    }

    #[test]
    fn momentum_recurrence_matches_closed_form() {
        // f = x^2 / 2 so grad = x; with wd the effective curvature is 1 + wd.
        let (lr, mu, wd) = (0.1f64, 0.9f64, 5e-4f64);
        let mut x = [1.0f64];
        let mut v = [0.0f64];
        let (mut xr, mut vr) = (1.0f64, 0.0f64);
        for _ in 0..100 {
            let g = [x[0]];
            sgd_step(&mut x, &g, &mut v, lr, mu, wd).unwrap();
            vr = mu * vr + (xr + wd * xr);
            xr -= lr * vr;
            assert_eq!(x[0], xr);
        }
        assert!(x[0].abs() < 1.0);
    }

    #[test]
    fn magnitude_decreases_in_the_small_step_regime() {
        // lr = 1e-4 keeps the momentum recurrence overdamped.
        let mut x = [1.0f64];
        let mut v = [0.0f64];
        let mut last = 1.0f64;
        for _ in 0..100 {
            let g = [x[0]];
            sgd_step(&mut x, &g, &mut v, 1e-4, 0.9, 5e-4).unwrap();
            assert!(x[0].abs() < last);
            last = x[0].abs();
        }
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut p = vec![1.0];
        let mut v = vec![0.0];
        assert!(matches!(
            sgd_step(&mut p, &[f64::NAN], &mut v, 0.1, 0.9, 0.0),
            Err(Error::NumericInput(_))
        ));
    }

    #[test]
    fn bias_decay_switch() {
        let mut m = Mlp::<f64>::init(&[2, 2], 0).unwrap();
        m.layers_mut()[0].bias = vec![1.0, 1.0];
        let zero: Vec<Vec<f64>> = m.param_arrays().iter().map(|a| vec![0.0; a.len()]).collect();
        let mut state = OptimizerState::for_model(&m);
        let cfg = SgdConfig {
            lr: 0.1,
            momentum: 0.0,
            weight_decay: 0.5,
            decay_biases: false,
        };
        sgd_update(&mut m, &zero, &mut state, &cfg).unwrap();
        assert_eq!(m.layers()[0].bias, vec![1.0, 1.0]);
        let cfg = SgdConfig {
            decay_biases: true,
            ..cfg
        };
        sgd_update(&mut m, &zero, &mut state, &cfg).unwrap();
        assert_eq!(m.layers()[0].bias, vec![0.95, 0.95]);
    }
}
