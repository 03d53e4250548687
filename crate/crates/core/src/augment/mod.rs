//! Perturbations: image pipelines, colour normalisation and Gaussian
//! feature-space noise for vector data.

mod image;
mod pipeline;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use image::RgbImage;
pub use pipeline::{
    augment_traced, color_normalize, sample_erase_rect, strong_augment, weak_augment,
    AugmentRanges, AugmentTrace, EraseRect,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbMode {
    Weak,
    Strong,
    Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub mode: PerturbMode,
    /// Standard deviation of the additive noise in `Vector` mode.
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl PerturbSpec {
    pub fn vector(noise_sigma: f64, rng_seed: u64) -> Self {
        Self {
            mode: PerturbMode::Vector,
            noise_sigma,
            rng_seed,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.rng_seed)
    }
}

/// `x + N(0, sigma^2 I)` using the spec's own seed.
pub fn perturb_vector(x: &[f64], spec: &PerturbSpec) -> Result<Vec<f64>> {
    if spec.mode != PerturbMode::Vector {
        return Err(Error::Contract(format!(
            "perturb_vector needs Vector mode, got {:?}",
            spec.mode
        )));
    }
    perturb_vector_with(x, spec.noise_sigma, &mut spec.rng())
}

/// `x + N(0, sigma^2 I)` drawing from a caller-owned stream.
pub fn perturb_vector_with<R: Rng + ?Sized>(x: &[f64], sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Contract(format!("noise sigma {sigma} must be >= 0")));
    }
    if sigma == 0.0 {
        return Ok(x.to_vec());
    }
    let normal = Normal::new(0.0, sigma).expect("validated sigma");
    Ok(x.iter().map(|v| v + normal.sample(rng)).collect())
}
