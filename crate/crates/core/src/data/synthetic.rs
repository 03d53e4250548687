use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Isotropic Gaussian class-conditional mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub class_fractions: Vec<f64>,
    /// `C x D` class means.
    pub means: Vec<Vec<f64>>,
    /// Per-coordinate variance.
    pub cov_scale: f64,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSplits {
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// `n_classes` means with all pairwise distances equal to `separation`
/// (scaled unit vectors) when `dim >= n_classes`; otherwise evenly spaced on
/// a circle in the first two coordinates with neighbouring distance `separation`.
pub fn simplex_means(n_classes: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    if dim >= n_classes {
        let r = separation / std::f64::consts::SQRT_2;
        (0..n_classes)
            .map(|c| {
                let mut m = vec![0.0; dim];
                m[c] = r;
                m
            })
            .collect()
    } else {
        let step = std::f64::consts::TAU / n_classes as f64;
        let radius = separation / (2.0 * (step / 2.0).sin());
        (0..n_classes)
            .map(|c| {
                let mut m = vec![0.0; dim];
                let a = step * c as f64;
                m[0] = radius * a.cos();
                if dim > 1 {
                    m[1] = radius * a.sin();
                }
                m
            })
            .collect()
    }
}

impl GaussianMixtureSpec {
    pub fn n_classes(&self) -> usize {
        self.class_fractions.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.n_classes();
        if c < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self
            .class_fractions
            .iter()
            .any(|f| !f.is_finite() || *f <= 0.0 || *f > 1.0)
        {
            return Err(Error::Config(format!(
                "every class fraction must lie in (0, 1]: {:?}",
                self.class_fractions
            )));
        }
        let total: f64 = self.class_fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("class fractions sum to {total}")));
        }
        if self.means.len() != c {
            return Err(Error::Config(format!("{} means for {c} classes", self.means.len())));
        }
        let d = self.dim();
        if d == 0 || self.means.iter().any(|m| m.len() != d || m.iter().any(|v| !v.is_finite())) {
            return Err(Error::Config("means must be finite rows of equal, positive length".into()));
        }
        if !(self.cov_scale > 0.0 && self.cov_scale.is_finite()) {
            return Err(Error::Config(format!("cov_scale {} must be > 0", self.cov_scale)));
        }
        for (name, n) in [
            ("n_labeled", self.n_labeled),
            ("n_val", self.n_val),
            ("n_test", self.n_test),
        ] {
            if n < c {
                return Err(Error::Config(format!("{name} = {n} < {c} classes")));
            }
        }
        Ok(())
    }
}

/// Multinomial class counts; when `cover` is set every class gets at least
/// one sample, taken from the currently largest class.
fn draw_labels(n: usize, fractions: &[f64], cover: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (c, f) in fractions.iter().enumerate() {
                acc += f;
                if u < acc {
                    return c;
                }
            }
            fractions.len() - 1
        })
        .collect();
    if cover && n >= fractions.len() {
        for c in 0..fractions.len() {
            if labels.contains(&c) {
                continue;
            }
            let mut counts = vec![0usize; fractions.len()];
            for &l in &labels {
                counts[l] += 1;
            }
            let largest = (0..counts.len()).max_by_key(|&k| (counts[k], usize::MAX - k)).unwrap();
            let pos = labels.iter().rposition(|&l| l == largest).unwrap();
            labels[pos] = c;
        }
    }
    labels
}

fn draw_split(spec: &GaussianMixtureSpec, n: usize, cover: bool, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Vec<usize>)> {
    let labels = draw_labels(n, &spec.class_fractions, cover, rng);
    let std = spec.cov_scale.sqrt();
    let mut features = Vec::with_capacity(n * spec.dim());
    for &l in &labels {
        for m in &spec.means[l] {
            let z: f64 = StandardNormal.sample(rng);
            features.push(m + std * z);
        }
    }
    Ok((features, labels))
}

pub fn generate_gaussian_mixture(spec: &GaussianMixtureSpec) -> Result<SyntheticSplits> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (c, d) = (spec.n_classes(), spec.dim());
    let (x, y) = draw_split(spec, spec.n_labeled, true, &mut rng)?;
    let labeled = Dataset::new(d, x, Some(y), c)?;
    let (x, _) = draw_split(spec, spec.n_unlabeled, false, &mut rng)?;
    let unlabeled = Dataset::new(d, x, None, c)?;
    let (x, y) = draw_split(spec, spec.n_val, true, &mut rng)?;
    let val = Dataset::new(d, x, Some(y), c)?;
    let (x, y) = draw_split(spec, spec.n_test, true, &mut rng)?;
    let test = Dataset::new(d, x, Some(y), c)?;
    Ok(SyntheticSplits {
        labeled,
        unlabeled,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(fractions: Vec<f64>, n: usize, seed: u64) -> GaussianMixtureSpec {
        let c = fractions.len();
        GaussianMixtureSpec {
            class_fractions: fractions,
            means: simplex_means(c, 4, 2.0),
            cov_scale: 1.0,
            n_labeled: n,
            n_unlabeled: n,
            n_val: c,
            n_test: c,
            seed,
        }
    }

    #[test]
    fn balanced_counts_concentrate() {
        let n = 10_000;
        let s = generate_gaussian_mixture(&spec(vec![0.5, 0.5], n, 3)).unwrap();
        let zero = s.labeled.class_counts()[0] as f64;
        assert!((zero - 5000.0).abs() <= 3.0 * (n as f64 * 0.25).sqrt());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_gaussian_mixture(&spec(vec![0.7, 0.2, 0.1], 200, 9)).unwrap();
        let b = generate_gaussian_mixture(&spec(vec![0.7, 0.2, 0.1], 200, 9)).unwrap();
        let c = generate_gaussian_mixture(&spec(vec![0.7, 0.2, 0.1], 200, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.labeled, c.labeled);
    }

    #[test]
    fn zero_fraction_classes_rejected() {
        assert!(matches!(
            generate_gaussian_mixture(&spec(vec![1.0, 0.0, 0.0], 50, 0)),
            Err(Error::Config(_))
        ));
        assert!(generate_gaussian_mixture(&spec(vec![0.6, 0.6], 50, 0)).is_err());
    }

    #[test]
    fn every_class_represented_in_labeled_splits() {
        let s = generate_gaussian_mixture(&spec(vec![0.97, 0.02, 0.01], 20, 1)).unwrap();
        assert!(s.labeled.class_counts().iter().all(|c| *c >= 1));
        assert!(s.val.class_counts().iter().all(|c| *c >= 1));
        assert!(!s.unlabeled.is_labeled());
    }

    #[test]
    fn simplex_means_are_equidistant() {
        let m = simplex_means(3, 8, 2.5);
        for i in 0..3 {
            for j in i + 1..3 {
                let d: f64 = m[i].iter().zip(&m[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!((d - 2.5).abs() < 1e-12);
            }
        }
        let ring = simplex_means(5, 2, 1.0);
        let d: f64 = ring[0].iter().zip(&ring[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!((d - 1.0).abs() < 1e-12);
    }
}
