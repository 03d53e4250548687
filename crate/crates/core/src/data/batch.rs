use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::augment::{perturb_vector_with, PerturbMode, PerturbSpec};
use crate::error::{Error, Result};

/// One optimisation step's worth of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub labeled: Vec<(Vec<f64>, usize)>,
    /// `(original, augmented)` pairs.
    pub unlabeled: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Draws indices without replacement, reshuffling when a pass is exhausted.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    order: Vec<usize>,
    cursor: usize,
    passes: usize,
}

impl EpochSampler {
    pub fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            cursor: n,
            passes: 0,
        }
    }

    pub fn next_index<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        if self.cursor == self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
            self.passes += 1;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    /// Number of passes started so far.
    pub fn passes(&self) -> usize {
        self.passes
    }
}

/// Composes labeled / unlabeled batches from two pools that cycle
/// independently.
#[derive(Debug, Clone)]
pub struct BatchComposer {
    labeled: EpochSampler,
    unlabeled: EpochSampler,
    batch_labeled: usize,
    batch_unlabeled: usize,
    augment_labeled: bool,
    order_rng: ChaCha8Rng,
}

impl BatchComposer {
    pub fn new(
        labeled_pool: &Dataset,
        unlabeled_pool: &Dataset,
        batch_labeled: usize,
        batch_unlabeled: usize,
        order_seed: u64,
    ) -> Result<Self> {
        if labeled_pool.is_empty() || (batch_unlabeled > 0 && unlabeled_pool.is_empty()) {
            return Err(Error::Contract("cannot compose batches from an empty pool".into()));
        }
        labeled_pool.require_labels()?;
        if batch_labeled == 0 {
            return Err(Error::Config("labeled batch size must be positive".into()));
        }
        Ok(Self {
            labeled: EpochSampler::new(labeled_pool.len()),
            unlabeled: EpochSampler::new(unlabeled_pool.len()),
            batch_labeled,
            batch_unlabeled,
            augment_labeled: true,
            order_rng: ChaCha8Rng::seed_from_u64(order_seed),
        })
    }

    /// Whether labeled samples get the same perturbation as unlabeled ones.
    pub fn augment_labeled(mut self, yes: bool) -> Self {
        self.augment_labeled = yes;
        self
    }

    /// Next batch; perturbations draw from `aug_rng` with `spec.noise_sigma`.
    pub fn compose<R: Rng + ?Sized>(
        &mut self,
        labeled_pool: &Dataset,
        unlabeled_pool: &Dataset,
        spec: &PerturbSpec,
        aug_rng: &mut R,
    ) -> Result<Batch> {
        if spec.mode != PerturbMode::Vector {
            return Err(Error::Contract("feature batches need a Vector perturbation".into()));
        }
        let labels = labeled_pool.require_labels()?;
        let mut labeled = Vec::with_capacity(self.batch_labeled);
        for _ in 0..self.batch_labeled {
            let i = self.labeled.next_index(&mut self.order_rng);
            let x = if self.augment_labeled {
                perturb_vector_with(labeled_pool.row(i), spec.noise_sigma, aug_rng)?
            } else {
                labeled_pool.row(i).to_vec()
            };
            labeled.push((x, labels[i]));
        }
        let mut unlabeled = Vec::with_capacity(self.batch_unlabeled);
        for _ in 0..self.batch_unlabeled {
            let i = self.unlabeled.next_index(&mut self.order_rng);
            let orig = unlabeled_pool.row(i).to_vec();
            let aug = perturb_vector_with(&orig, spec.noise_sigma, aug_rng)?;
            unlabeled.push((orig, aug));
        }
        Ok(Batch { labeled, unlabeled })
    }
}
