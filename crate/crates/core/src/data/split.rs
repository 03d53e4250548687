use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// Largest-remainder apportionment of `n` items over `ratios`.
fn apportion(n: usize, ratios: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut remaining = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[i] += 1;
        remaining -= 1;
    }
    counts
}

/// Splits a labeled dataset so every part keeps the per-class proportions.
///
/// Parts come back in `ratios` order; rows inside a part keep their
/// original relative order.
pub fn stratified_split(data: &Dataset, ratios: &[f64], seed: u64) -> Result<Vec<Dataset>> {
    let labels = data.require_labels()?;
    if ratios.is_empty() || ratios.iter().any(|r| *r < 0.0 || !r.is_finite()) {
        return Err(Error::Config(format!("invalid split ratios {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios sum to {total}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); ratios.len()];
    for c in 0..data.n_classes() {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 3 {
            log::warn!(
                "class {c} has only {} samples; stratified split is best effort",
                members.len()
            );
        }
        members.shuffle(&mut rng);
        let mut offset = 0;
        for (part, n) in parts.iter_mut().zip(apportion(members.len(), ratios)) {
            part.extend_from_slice(&members[offset..offset + n]);
            offset += n;
        }
    }
    Ok(parts
        .into_iter()
        .map(|mut idx| {
            idx.sort_unstable();
            data.select(&idx)
        })
        .collect())
}

/// Stratified labeled / unlabeled partition of a training split; the
/// unlabeled part has its labels removed.
pub fn split_labeled_unlabeled(train: &Dataset, labeled_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(labeled_fraction > 0.0 && labeled_fraction < 1.0) {
        return Err(Error::Config(format!(
            "labeled fraction {labeled_fraction} outside (0, 1)"
        )));
    }
    let mut parts = stratified_split(train, &[labeled_fraction, 1.0 - labeled_fraction], seed)?;
    let unlabeled = parts.pop().unwrap().without_labels();
    Ok((parts.pop().unwrap(), unlabeled))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_class(n: usize) -> Dataset {
        Dataset::new(1, (0..n).map(|i| i as f64).collect(), Some(vec![0; n]), 1).unwrap()
    }

    #[test]
    fn hundred_samples_split_exactly() {
        let parts = stratified_split(&single_class(100), &[0.7, 0.2, 0.1], 0).unwrap();
        let sizes: Vec<usize> = parts.iter().map(Dataset::len).collect();
        assert_eq!(sizes, vec![70, 20, 10]);
    }

    #[test]
    fn splits_are_disjoint_and_cover() {
        let parts = stratified_split(&single_class(57), &[0.7, 0.2, 0.1], 4).unwrap();
        let mut all: Vec<f64> = parts.iter().flat_map(|p| p.features().to_vec()).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..57).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_under_seed() {
        let d = single_class(40);
        assert_eq!(
            stratified_split(&d, &[0.5, 0.5], 1).unwrap(),
            stratified_split(&d, &[0.5, 0.5], 1).unwrap()
        );
        assert_ne!(
            stratified_split(&d, &[0.5, 0.5], 1).unwrap(),
            stratified_split(&d, &[0.5, 0.5], 2).unwrap()
        );
    }

    #[test]
    fn apportion_uses_largest_remainder() {
        assert_eq!(apportion(10, &[0.7, 0.2, 0.1]), vec![7, 2, 1]);
        assert_eq!(apportion(2, &[0.7, 0.2, 0.1]), vec![1, 1, 0]);
        assert_eq!(apportion(1, &[0.7, 0.2, 0.1]), vec![1, 0, 0]);
    }

    #[test]
    fn rejects_bad_ratios_and_unlabeled_input() {
        let d = single_class(10);
        assert!(stratified_split(&d, &[0.5, 0.6], 0).is_err());
        assert!(stratified_split(&d.without_labels(), &[1.0], 0).is_err());
        assert!(split_labeled_unlabeled(&d, 1.0, 0).is_err());
    }

    #[test]
    fn labeled_unlabeled_partition() {
        let (l, u) = split_labeled_unlabeled(&single_class(100), 0.1, 3).unwrap();
        assert_eq!((l.len(), u.len()), (10, 90));
        assert!(!u.is_labeled());
    }
}
