//! Datasets, synthetic generation, splitting, batching and resampling.

mod batch;
mod dataset;
mod resample;
mod split;
mod synthetic;

pub use batch::{Batch, BatchComposer, EpochSampler};
pub use dataset::Dataset;
pub use resample::{random_undersample, sampling_baseline, smote_oversample};
pub use split::{split_labeled_unlabeled, stratified_split};
pub use synthetic::{generate_gaussian_mixture, simplex_means, GaussianMixtureSpec, SyntheticSplits};

use crate::error::Result;
use crate::losses::ClassFrequencyTable;

/// Fraction of each class among `labels`.
pub fn class_frequencies(labels: &[usize], n_classes: usize) -> Result<ClassFrequencyTable<f64>> {
    ClassFrequencyTable::from_labels(labels, n_classes)
}
