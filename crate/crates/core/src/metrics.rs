//! Class-balanced evaluation: confusion matrix, recall, UAR, G-mean and
//! one-vs-rest ROC / AUC.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Mlp;
use crate::prob::predicted_class;
use crate::scalar::Scalar;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("confusion matrix must be square".into()));
        }
        Ok(Self {
            n_classes: n,
            counts: rows.concat(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.n_classes..(truth + 1) * self.n_classes]
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.row(truth).iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        (0..self.n_classes).map(|c| self.row(c).to_vec()).collect()
    }
}

pub fn confusion_matrix(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut counts = vec![0u64; n_classes * n_classes];
    for (&p, &t) in preds.iter().zip(labels) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::Contract(format!(
                "class index ({t}, {p}) out of range for {n_classes} classes"
            )));
        }
        counts[t * n_classes + p] += 1;
    }
    Ok(ConfusionMatrix { n_classes, counts })
}

/// Recall per true class. A class with no samples gets recall 0.
pub fn per_class_recall(cm: &ConfusionMatrix) -> Vec<f64> {
    (0..cm.n_classes())
        .map(|c| {
            let support = cm.row_sum(c);
            if support == 0 {
                log::warn!("class {c} has no samples; its recall is taken as 0");
                0.0
            } else {
                cm.get(c, c) as f64 / support as f64
            }
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unweighted average recall.
pub fn uar(cm: &ConfusionMatrix) -> f64 {
    mean(&per_class_recall(cm))
}

/// `C`-th root of the product of per-class recalls; exactly 0 if any recall is 0.
pub fn g_mean(cm: &ConfusionMatrix) -> f64 {
    g_mean_of(&per_class_recall(cm))
}

fn g_mean_of(recalls: &[f64]) -> f64 {
    if recalls.iter().any(|r| *r == 0.0) {
        return 0.0;
    }
    let log_mean = recalls.iter().map(|r| r.ln()).sum::<f64>() / recalls.len() as f64;
    log_mean.exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores `>= threshold` are called positive. The first point uses `+inf`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

struct Sweep {
    // (threshold, cumulative fp, cumulative tp), starting at (inf, 0, 0)
    steps: Vec<(f64, u64, u64)>,
    positives: u64,
    negatives: u64,
}

fn sweep(scores: &[f64], positives: &[bool]) -> Result<Sweep> {
    if scores.len() != positives.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            positives.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::NumericInput(format!("score {bad}")));
    }
    let p = positives.iter().filter(|b| **b).count() as u64;
    let n = positives.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(Error::UndefinedMetric(format!(
            "ROC needs both classes, got {p} positives and {n} negatives"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut steps = vec![(f64::INFINITY, 0, 0)];
    let (mut fp, mut tp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positives[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        steps.push((s, fp, tp));
    }
    Ok(Sweep {
        steps,
        positives: p,
        negatives: n,
    })
}

/// ROC curve swept over every distinct score.
pub fn roc_curve(scores: &[f64], positives: &[bool]) -> Result<Vec<RocPoint>> {
    let sw = sweep(scores, positives)?;
    Ok(sw
        .steps
        .iter()
        .map(|&(threshold, fp, tp)| RocPoint {
            threshold,
            fpr: fp as f64 / sw.negatives as f64,
            tpr: tp as f64 / sw.positives as f64,
        })
        .collect())
}

/// Trapezoidal area under the ROC curve. Tied scores form a diagonal
/// segment, which credits each tied positive/negative pair with one half.
pub fn roc_auc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    let sw = sweep(scores, positives)?;
    // Twice the area in integer units keeps the sum exact.
    let twice: u128 = sw
        .steps
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) as u128 * (w[1].2 + w[0].2) as u128)
        .sum();
    Ok(twice as f64 / (2 * sw.positives as u128 * sw.negatives as u128) as f64)
}

/// `P(score_pos > score_neg) + P(tie) / 2` from mid-ranks.
pub fn mann_whitney_auc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    let sw = sweep(scores, positives)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of doubled mid-ranks of positives, integer valued.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j, doubled mid-rank = i + 1 + j
        let twice_mid = (i + 1 + j) as u128;
        let pos_in_group = order[i..j].iter().filter(|&&k| positives[k]).count() as u128;
        twice_rank_sum += twice_mid * pos_in_group;
        i = j;
    }
    let (p, n) = (sw.positives as u128, sw.negatives as u128);
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class_recall: Vec<f64>,
    pub uar: f64,
    pub g_mean: f64,
    /// `None` where the class is absent (or the only class) in the data.
    pub per_class_auc: Vec<Option<f64>>,
    pub avg_auc: f64,
    pub confusion: Vec<Vec<u64>>,
}

/// Metrics from predicted distributions; AUC is one-vs-rest on each
/// class's probability.
pub fn evaluate_probs(probs: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Result<MetricsReport> {
    if probs.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.iter().any(|p| p.len() != n_classes) {
        return Err(Error::Dimension(format!("predictions must have {n_classes} entries")));
    }
    let preds: Vec<usize> = probs.iter().map(|p| predicted_class(p)).collect();
    let cm = confusion_matrix(&preds, labels, n_classes)?;
    let recall = per_class_recall(&cm);
    let mut per_class_auc = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        match roc_auc(&scores, &pos) {
            Ok(a) => per_class_auc.push(Some(a)),
            Err(Error::UndefinedMetric(msg)) => {
                log::warn!("AUC for class {c} skipped: {msg}");
                per_class_auc.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let defined: Vec<f64> = per_class_auc.iter().flatten().copied().collect();
    let avg_auc = if defined.is_empty() { 0.0 } else { mean(&defined) };
    Ok(MetricsReport {
        uar: mean(&recall),
        g_mean: g_mean_of(&recall),
        per_class_recall: recall,
        per_class_auc,
        avg_auc,
        confusion: cm.to_rows(),
    })
}

pub fn predict_all<T: Scalar>(model: &Mlp<T>, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    data.rows()
        .map(|row| {
            let x: Vec<T> = row.iter().map(|v| T::of(*v)).collect();
            Ok(model.predict_proba(&x)?.iter().map(|p| p.as_f64()).collect())
        })
        .collect()
}

pub fn evaluate<T: Scalar>(model: &Mlp<T>, data: &Dataset) -> Result<MetricsReport> {
    let labels = data.require_labels()?;
    evaluate_probs(&predict_all(model, data)?, labels, model.n_classes())
}

/// CSV with columns `class,threshold,fpr,tpr` for every class with a defined curve.
pub fn roc_csv(probs: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Result<String> {
    let mut out = String::from("class,threshold,fpr,tpr\n");
    for c in 0..n_classes {
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        match roc_curve(&scores, &pos) {
            Ok(points) => {
                for pt in points {
                    writeln!(out, "{c},{},{},{}", pt.threshold, pt.fpr, pt.tpr).unwrap();
                }
            }
            Err(Error::UndefinedMetric(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> ConfusionMatrix {
        ConfusionMatrix::from_counts(&[vec![3, 1], vec![2, 4]]).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let cm = confusion_matrix(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(cm.to_rows(), vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        let cm = confusion_matrix(&[1, 0], &[0, 0], 2).unwrap();
        assert_eq!(cm.row(0), &[1, 1]);
        assert_eq!(cm.row_sum(0), 2);
        assert!(confusion_matrix(&[0], &[0, 1], 2).is_err());
        assert!(confusion_matrix(&[2], &[0], 2).is_err());
    }

    #[test]
    fn uar_and_g_mean_fixture() {
        let cm = fixture();
        let r = per_class_recall(&cm);
        assert!((r[0] - 0.75).abs() < 1e-15);
        assert!((r[1] - 4.0 / 6.0).abs() < 1e-15);
        assert!((uar(&cm) - 0.708_333_333_333).abs() < 1e-9);
        assert!((g_mean(&cm) - 0.707_106_781_186_5).abs() < 1e-9);
    }

    #[test]
    fn perfect_and_majority_classifiers() {
        let cm = confusion_matrix(&[0, 1, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(uar(&cm), 1.0);
        assert_eq!(g_mean(&cm), 1.0);
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i >= 90)).collect();
        let cm = confusion_matrix(&[0; 100], &labels, 2).unwrap();
        assert_eq!(uar(&cm), 0.5);
        assert_eq!(g_mean(&cm), 0.0);
    }

    #[test]
    fn empty_class_recall_is_zero() {
        let cm = confusion_matrix(&[0, 0], &[0, 0], 2).unwrap();
        assert_eq!(per_class_recall(&cm), vec![1.0, 0.0]);
        assert_eq!(uar(&cm), 0.5);
    }

    #[test]
    fn auc_examples() {
        let pos = [false, false, true, true];
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &pos).unwrap(), 0.75);
        assert_eq!(mann_whitney_auc(&[0.1, 0.4, 0.35, 0.8], &pos).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &pos).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 4], &pos).unwrap(), 0.5);
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[true, true]),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(roc_auc(&[f64::NAN, 0.2], &[true, false]).is_err());
    }

    #[test]
    fn roc_curve_endpoints() {
        let pts = roc_curve(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!((pts[0].fpr, pts[0].tpr), (0.0, 0.0));
        let last = pts.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    #[test]
    fn leaked_labels_score_perfectly() {
        let labels = vec![0, 1, 2, 2, 1, 0];
        let probs: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| (0..3).map(|c| if c == l { 1.0 } else { 0.0 }).collect())
            .collect();
        let r = evaluate_probs(&probs, &labels, 3).unwrap();
        assert_eq!(r.uar, 1.0);
        assert_eq!(r.g_mean, 1.0);
        assert_eq!(r.avg_auc, 1.0);
        assert!(r.per_class_auc.iter().all(|a| *a == Some(1.0)));
    }

    #[test]
    fn absent_class_auc_is_skipped() {
        let probs = vec![vec![0.7, 0.2, 0.1], vec![0.2, 0.7, 0.1]];
        let r = evaluate_probs(&probs, &[0, 1], 3).unwrap();
        assert_eq!(r.per_class_auc[2], None);
        assert_eq!(r.avg_auc, 1.0);
        let csv = roc_csv(&probs, &[0, 1], 3).unwrap();
        assert!(csv.starts_with("class,threshold,fpr,tpr\n0,inf,0,0\n"));
    }
}
