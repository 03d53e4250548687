//! Supervised and consistency losses.
//!
//! Every loss exists twice: a plain function over probability slices and a
//! tape-recorded version in [`graph`] used for training. The two share no
//! code beyond `kl_div_values`, which lets the tests cross-check them.

use serde::{Deserialize, Serialize};

use crate::autodiff::kl_div_values;
use crate::error::{Error, Result};
use crate::prob::predicted_class;
use crate::scalar::Scalar;

/// Per-class frequency fractions of the training labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassFrequencyTable<T> {
    freqs: Vec<T>,
}

impl<T: Scalar> ClassFrequencyTable<T> {
    pub fn new(freqs: Vec<T>) -> Result<Self> {
        if freqs.is_empty() {
            return Err(Error::Config("empty class frequency table".into()));
        }
        if freqs
            .iter()
            .any(|f| !f.is_finite() || *f < T::zero() || *f > T::one())
        {
            return Err(Error::Config(format!(
                "class frequencies must lie in [0, 1]: {freqs:?}"
            )));
        }
        let total = freqs.iter().copied().fold(T::zero(), |a, b| a + b);
        if (total - T::one()).abs() > T::sum_tolerance(freqs.len()) {
            return Err(Error::Config(format!(
                "class frequencies sum to {total}, expected 1"
            )));
        }
        Ok(Self { freqs })
    }

    /// `count(c) / N` over `labels`.
    pub fn from_labels(labels: &[usize], n_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Contract("class frequencies of an empty label set".into()));
        }
        let mut counts = vec![0usize; n_classes];
        for &l in labels {
            if l >= n_classes {
                return Err(Error::Contract(format!(
                    "label {l} out of range for {n_classes} classes"
                )));
            }
            counts[l] += 1;
        }
        let n = T::of(labels.len() as f64);
        Ok(Self {
            freqs: counts.iter().map(|c| T::of(*c as f64) / n).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn freqs(&self) -> &[T] {
        &self.freqs
    }

    pub fn freq(&self, class: usize) -> T {
        self.freqs[class]
    }

    pub fn min(&self) -> T {
        self.freqs.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.freqs.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn cast<U: Scalar>(&self) -> ClassFrequencyTable<U> {
        ClassFrequencyTable {
            freqs: self.freqs.iter().map(|f| U::of(f.as_f64())).collect(),
        }
    }

    /// Weighted cross-entropy class weight, `1 - freq`.
    pub fn inverse_weight(&self, class: usize) -> T {
        T::one() - self.freqs[class]
    }

    /// Suppression weight for consistency on an original prediction of `class`.
    ///
    /// Linear in class frequency: `beta` for the rarest class, `1` for the most
    /// frequent, `1` everywhere when all classes are equally frequent. This is
    /// an interpolating stand-in for the suppression schedule, which is only
    /// characterised here by its endpoints.
    pub fn suppression_weight(&self, class: usize, beta: T) -> T {
        let (lo, hi) = (self.min(), self.max());
        if hi - lo <= T::zero() {
            return T::one();
        }
        beta + (T::one() - beta) * (self.freqs[class] - lo) / (hi - lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsistencyKind {
    /// Plain KL toward the original prediction.
    Cl,
    /// `Cl`, scaled down when the original prediction is a rare class.
    Scl,
    /// Adaptive blended target.
    Abcl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Blending {
    /// Blend for every pair.
    AlwaysOn,
    /// Fall back to `Cl` when both predictions name the same class.
    Selective,
}

impl Blending {
    pub fn name(self) -> &'static str {
        match self {
            Blending::AlwaysOn => "always",
            Blending::Selective => "selective",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub kind: ConsistencyKind,
    /// Compensation strength in `(0, 1]`.
    pub gamma: f64,
    /// Suppression floor in `(0, 1]`.
    pub beta: f64,
    pub blending: Blending,
    /// Coefficient on the consistency term.
    pub unsup_weight: f64,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            kind: ConsistencyKind::Abcl,
            gamma: 0.4,
            beta: 0.8,
            blending: Blending::AlwaysOn,
            unsup_weight: 1.0,
        }
    }
}

impl ConsistencyConfig {
    pub fn of_kind(kind: ConsistencyKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Config(format!("beta {} outside (0, 1]", self.beta)));
        }
        if !(self.unsup_weight >= 0.0 && self.unsup_weight.is_finite()) {
            return Err(Error::Config(format!(
                "unsup_weight {} must be finite and >= 0",
                self.unsup_weight
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupervisedLoss {
    CrossEntropy,
    /// Cross entropy weighted by `1 - freq(label)`.
    WeightedCe,
    Focal { gamma: f64 },
}

fn check_label<T>(p: &[T], label: usize) -> Result<()> {
    if label >= p.len() {
        return Err(Error::Contract(format!(
            "label {label} out of range for {} classes",
            p.len()
        )));
    }
    Ok(())
}

pub fn cross_entropy<T: Scalar>(p: &[T], label: usize) -> Result<T> {
    check_label(p, label)?;
    Ok(-p[label].max(T::prob_floor()).ln())
}

pub fn weighted_ce<T: Scalar>(p: &[T], label: usize, table: &ClassFrequencyTable<T>) -> Result<T> {
    check_label(p, label)?;
    if table.len() != p.len() {
        return Err(Error::Dimension(format!(
            "{} class frequencies for {} classes",
            table.len(),
            p.len()
        )));
    }
    Ok(table.inverse_weight(label) * cross_entropy(p, label)?)
}

pub fn focal_loss<T: Scalar>(p: &[T], label: usize, gamma_f: T) -> Result<T> {
    check_label(p, label)?;
    if gamma_f < T::zero() {
        return Err(Error::Contract(format!("focal gamma {gamma_f} < 0")));
    }
    let pl = p[label];
    Ok(-(T::one() - pl).powf(gamma_f) * pl.max(T::prob_floor()).ln())
}

/// `KL(z || z_hat)`.
pub fn consistency_cl<T: Scalar>(z: &[T], z_hat: &[T]) -> T {
    kl_div_values(z, z_hat)
}

pub fn consistency_scl<T: Scalar>(
    z: &[T],
    z_hat: &[T],
    table: &ClassFrequencyTable<T>,
    beta: T,
) -> T {
    table.suppression_weight(predicted_class(z), beta) * consistency_cl(z, z_hat)
}

/// Blend weight from the frequencies of the two predicted classes:
/// `clamp(gamma (n_orig - n_aug) + 1/2, 0, 1)`.
pub fn compute_k<T: Scalar>(n_orig: T, n_aug: T, gamma: T) -> T {
    let half = T::of(0.5);
    (gamma * (n_orig - n_aug) + half).min(T::one()).max(T::zero())
}

/// `(1 - k) z + k z_hat`.
pub fn blend_target<T: Scalar>(z: &[T], z_hat: &[T], k: T) -> Vec<T> {
    let keep = T::one() - k;
    z.iter()
        .zip(z_hat)
        .map(|(a, b)| keep * *a + k * *b)
        .collect()
}

/// Blended-target loss at a fixed `k`: `KL(t || z) + KL(t || z_hat)`.
pub fn blended_consistency<T: Scalar>(z: &[T], z_hat: &[T], k: T) -> T {
    let target = blend_target(z, z_hat, k);
    kl_div_values(&target, z) + kl_div_values(&target, z_hat)
}

/// `k` for a pair of predictions under `table`.
pub fn pair_k<T: Scalar>(z: &[T], z_hat: &[T], table: &ClassFrequencyTable<T>, gamma: T) -> T {
    let c = predicted_class(z);
    let c_hat = predicted_class(z_hat);
    compute_k(table.freq(c), table.freq(c_hat), gamma)
}

pub fn consistency_abcl<T: Scalar>(
    z: &[T],
    z_hat: &[T],
    table: &ClassFrequencyTable<T>,
    cfg: &ConsistencyConfig,
) -> T {
    if cfg.blending == Blending::Selective && predicted_class(z) == predicted_class(z_hat) {
        return consistency_cl(z, z_hat);
    }
    blended_consistency(z, z_hat, pair_k(z, z_hat, table, T::of(cfg.gamma)))
}

pub fn consistency_loss<T: Scalar>(
    z: &[T],
    z_hat: &[T],
    table: &ClassFrequencyTable<T>,
    cfg: &ConsistencyConfig,
) -> T {
    match cfg.kind {
        ConsistencyKind::Cl => consistency_cl(z, z_hat),
        ConsistencyKind::Scl => consistency_scl(z, z_hat, table, T::of(cfg.beta)),
        ConsistencyKind::Abcl => consistency_abcl(z, z_hat, table, cfg),
    }
}

pub fn supervised_loss<T: Scalar>(
    kind: SupervisedLoss,
    p: &[T],
    label: usize,
    table: &ClassFrequencyTable<T>,
) -> Result<T> {
    match kind {
        SupervisedLoss::CrossEntropy => cross_entropy(p, label),
        SupervisedLoss::WeightedCe => weighted_ce(p, label, table),
        SupervisedLoss::Focal { gamma } => focal_loss(p, label, T::of(gamma)),
    }
}

/// The same losses recorded on a [`Tape`](crate::autodiff::Tape).
pub mod graph {
    use super::*;
    use crate::autodiff::{Tape, Var};

    pub fn cross_entropy<'t, T: Scalar>(tape: &'t Tape<T>, p: Var<'t, T>, label: usize) -> Result<Var<'t, T>> {
        tape.cross_entropy(p, label)
    }

    pub fn weighted_ce<'t, T: Scalar>(
        tape: &'t Tape<T>,
        p: Var<'t, T>,
        label: usize,
        table: &ClassFrequencyTable<T>,
    ) -> Result<Var<'t, T>> {
        let ce = tape.cross_entropy(p, label)?;
        Ok(tape.scale(ce, table.inverse_weight(label)))
    }

    pub fn focal_loss<'t, T: Scalar>(
        tape: &'t Tape<T>,
        p: Var<'t, T>,
        label: usize,
        gamma_f: T,
    ) -> Result<Var<'t, T>> {
        tape.focal(p, label, gamma_f)
    }

    /// Gradient reaches the model only through `z_hat`.
    pub fn consistency_cl<'t, T: Scalar>(
        tape: &'t Tape<T>,
        z: Var<'t, T>,
        z_hat: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let target = tape.stop_gradient(z);
        tape.kl_div(target, z_hat)
    }

    pub fn consistency_scl<'t, T: Scalar>(
        tape: &'t Tape<T>,
        z: Var<'t, T>,
        z_hat: Var<'t, T>,
        table: &ClassFrequencyTable<T>,
        beta: T,
    ) -> Result<Var<'t, T>> {
        let w = table.suppression_weight(predicted_class(&z.value()), beta);
        let cl = consistency_cl(tape, z, z_hat)?;
        Ok(tape.scale(cl, w))
    }

    /// Blended target under stop-gradient.
    pub fn blend_target<'t, T: Scalar>(
        tape: &'t Tape<T>,
        z: Var<'t, T>,
        z_hat: Var<'t, T>,
        k: T,
    ) -> Result<Var<'t, T>> {
        let a = tape.scale(z, T::one() - k);
        let b = tape.scale(z_hat, k);
        let mixed = tape.add(a, b)?;
        Ok(tape.stop_gradient(mixed))
    }

    pub fn blended_consistency<'t, T: Scalar>(
        tape: &'t Tape<T>,
        z: Var<'t, T>,
        z_hat: Var<'t, T>,
        k: T,
    ) -> Result<Var<'t, T>> {
        let target = blend_target(tape, z, z_hat, k)?;
        let to_orig = tape.kl_div(target, z)?;
        let to_aug = tape.kl_div(target, z_hat)?;
        tape.add(to_orig, to_aug)
    }

    pub fn consistency_abcl<'t, T: Scalar>(
        tape: &'t Tape<T>,
        z: Var<'t, T>,
        z_hat: Var<'t, T>,
        table: &ClassFrequencyTable<T>,
        cfg: &ConsistencyConfig,
    ) -> Result<Var<'t, T>> {
        let (zv, zhv) = (z.value(), z_hat.value());
        if cfg.blending == Blending::Selective && predicted_class(&zv) == predicted_class(&zhv) {
            return consistency_cl(tape, z, z_hat);
        }
        let k = pair_k(&zv, &zhv, table, T::of(cfg.gamma));
        blended_consistency(tape, z, z_hat, k)
    }

    pub fn consistency_loss<'t, T: Scalar>(
        tape: &'t Tape<T>,
        z: Var<'t, T>,
        z_hat: Var<'t, T>,
        table: &ClassFrequencyTable<T>,
        cfg: &ConsistencyConfig,
    ) -> Result<Var<'t, T>> {
        match cfg.kind {
            ConsistencyKind::Cl => consistency_cl(tape, z, z_hat),
            ConsistencyKind::Scl => consistency_scl(tape, z, z_hat, table, T::of(cfg.beta)),
            ConsistencyKind::Abcl => consistency_abcl(tape, z, z_hat, table, cfg),
        }
    }

    pub fn supervised_loss<'t, T: Scalar>(
        tape: &'t Tape<T>,
        kind: SupervisedLoss,
        p: Var<'t, T>,
        label: usize,
        table: &ClassFrequencyTable<T>,
    ) -> Result<Var<'t, T>> {
        match kind {
            SupervisedLoss::CrossEntropy => cross_entropy(tape, p, label),
            SupervisedLoss::WeightedCe => weighted_ce(tape, p, label, table),
            SupervisedLoss::Focal { gamma } => focal_loss(tape, p, label, T::of(gamma)),
        }
    }
}
