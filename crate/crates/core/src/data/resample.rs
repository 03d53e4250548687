use rand::seq::index::sample;
use rand::Rng;

use super::Dataset;
use crate::error::{Error, Result};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_targets(data: &Dataset, targets: &[usize]) -> Result<()> {
    if targets.len() != data.n_classes() {
        return Err(Error::Dimension(format!(
            "{} targets for {} classes",
            targets.len(),
            data.n_classes()
        )));
    }
    Ok(())
}

/// SMOTE: tops each class up to its target count with points
/// `x + u (x_nn - x)`, `u ~ U[0, 1]`, where `x_nn` is one of the `k` nearest
/// same-class neighbours of a uniformly drawn class member `x`.
///
/// Originals come first, synthetic rows are appended class by class.
pub fn smote_oversample<R: Rng + ?Sized>(
    data: &Dataset,
    targets: &[usize],
    k_neighbors: usize,
    rng: &mut R,
) -> Result<Dataset> {
    check_targets(data, targets)?;
    if k_neighbors == 0 {
        return Err(Error::Config("SMOTE needs k_neighbors >= 1".into()));
    }
    let labels = data.require_labels()?;
    let mut out = data.clone();
    for (c, &target) in targets.iter().enumerate() {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.len() >= target {
            continue;
        }
        let needed = target - members.len();
        match members.len() {
            0 => {
                return Err(Error::Contract(format!(
                    "class {c} has no samples to oversample"
                )))
            }
            1 => {
                log::warn!("class {c} has a single sample; SMOTE falls back to duplication");
                for _ in 0..needed {
                    out.push(data.row(members[0]), Some(c))?;
                }
                continue;
            }
            _ => {}
        }
        let k = k_neighbors.min(members.len() - 1);
        let neighbours: Vec<Vec<usize>> = members
            .iter()
            .map(|&i| {
                let mut others: Vec<(f64, usize)> = members
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| (sq_dist(data.row(i), data.row(j)), j))
                    .collect();
                others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                others.into_iter().take(k).map(|(_, j)| j).collect()
            })
            .collect();
        for _ in 0..needed {
            let m = rng.random_range(0..members.len());
            let nn = neighbours[m][rng.random_range(0..k)];
            let lambda: f64 = rng.random();
            let (x, y) = (data.row(members[m]), data.row(nn));
            let synth: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + lambda * (b - a)).collect();
            out.push(&synth, Some(c))?;
        }
    }
    Ok(out)
}

/// Uniform per-class subsample without replacement down to `targets`.
pub fn random_undersample<R: Rng + ?Sized>(data: &Dataset, targets: &[usize], rng: &mut R) -> Result<Dataset> {
    check_targets(data, targets)?;
    let labels = data.require_labels()?;
    let mut keep = Vec::new();
    for (c, &target) in targets.iter().enumerate() {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if target > members.len() {
            return Err(Error::Contract(format!(
                "undersample target {target} exceeds {} samples of class {c}",
                members.len()
            )));
        }
        keep.extend(sample(rng, members.len(), target).into_iter().map(|j| members[j]));
    }
    keep.sort_unstable();
    Ok(data.select(&keep))
}

/// Oversamples every class below the median count up to the median with
/// SMOTE and undersamples the largest class down to it.
pub fn sampling_baseline<R: Rng + ?Sized>(data: &Dataset, k_neighbors: usize, rng: &mut R) -> Result<Dataset> {
    let counts = data.class_counts();
    let mut sorted = counts.clone();
    sorted.sort_unstable();
    let median = sorted[sorted.len() / 2];
    let largest = (0..counts.len()).max_by_key(|&c| (counts[c], usize::MAX - c)).unwrap();
    let up: Vec<usize> = counts.iter().map(|&n| n.max(median)).collect();
    let grown = smote_oversample(data, &up, k_neighbors, rng)?;
    let mut down = grown.class_counts();
    down[largest] = median.min(down[largest]);
    random_undersample(&grown, &down, rng)
}
