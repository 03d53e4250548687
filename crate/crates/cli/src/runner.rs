//! Data preparation, single seeded runs and cross-seed aggregation.

use std::fs::File;
use std::io::BufReader;

use imbassl::data::{
    generate_gaussian_mixture, sampling_baseline, simplex_means, split_labeled_unlabeled, stratified_split, Dataset,
    GaussianMixtureSpec,
};
use imbassl::losses::{Blending, ClassFrequencyTable};
use imbassl::metrics::{evaluate, MetricsReport};
use imbassl::rng::{derive_seed, stream_rng, Stream};
use imbassl::trainer::{train, AugmentStrength, TrainConfig, TrainData, TrainHistory};
use imbassl::Mlp64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DatasetSource, ExperimentConfig, FrequencySource};
use crate::error::{CliError, CliResult};
use crate::methods::Method;

/// Splits used by one run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub noise_sigma: f64,
}

pub fn prepare_data(cfg: &ExperimentConfig, seed: u64) -> CliResult<Prepared> {
    match &cfg.dataset {
        DatasetSource::Gaussian(g) => {
            let c = g.class_fractions.len();
            let spec = GaussianMixtureSpec {
                class_fractions: g.class_fractions.clone(),
                means: simplex_means(c, g.dim, g.separation),
                cov_scale: g.cov_scale,
                n_labeled: g.n_labeled,
                n_unlabeled: g.n_unlabeled,
                n_val: g.n_val,
                n_test: g.n_test,
                seed: g.seed.unwrap_or_else(|| derive_seed(seed, Stream::Data)),
            };
            let s = generate_gaussian_mixture(&spec)?;
            Ok(Prepared {
                noise_sigma: cfg.noise_sigma.unwrap_or(0.3 * g.cov_scale.sqrt()),
                labeled: s.labeled,
                unlabeled: s.unlabeled,
                val: s.val,
                test: s.test,
            })
        }
        DatasetSource::Csv(src) => {
            let file = File::open(&src.path).map_err(|e| CliError::io(format!("open {}", src.path.display()), e))?;
            let (labeled_rows, extra_unlabeled) = Dataset::read_csv(BufReader::new(file), src.n_classes)?;
            let data_seed = derive_seed(seed, Stream::Data);
            let parts = stratified_split(&labeled_rows, &[0.7, 0.2, 0.1], data_seed)?;
            let [train_part, test, val] = <[Dataset; 3]>::try_from(parts).expect("three ratios give three parts");
            let (labeled, mut unlabeled) = split_labeled_unlabeled(&train_part, src.labeled_fraction, data_seed)?;
            for row in extra_unlabeled.rows() {
                unlabeled.push(row, None)?;
            }
            Ok(Prepared {
                noise_sigma: cfg.noise_sigma.unwrap_or_else(|| 0.3 * within_class_std(&labeled)),
                labeled,
                unlabeled,
                val,
                test,
            })
        }
    }
}

/// Pooled within-class standard deviation, averaged over feature dimensions.
pub fn within_class_std(data: &Dataset) -> f64 {
    let Some(labels) = data.labels() else { return 0.0 };
    let (c, d) = (data.n_classes(), data.dim());
    let mut sums = vec![vec![0.0; d]; c];
    let counts = data.class_counts();
    for (row, &y) in data.rows().zip(labels) {
        for (s, v) in sums[y].iter_mut().zip(row) {
            *s += v;
        }
    }
    let mut ss = 0.0;
    for (row, &y) in data.rows().zip(labels) {
        for (j, v) in row.iter().enumerate() {
            let m = sums[y][j] / counts[y] as f64;
            ss += (v - m).powi(2);
        }
    }
    let occupied = counts.iter().filter(|&&n| n > 0).count();
    let dof = data.len().saturating_sub(occupied);
    if dof == 0 || d == 0 {
        return 0.0;
    }
    (ss / (dof * d) as f64).sqrt()
}

/// Per-run changes on top of the configured method.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Variant {
    pub gamma: Option<f64>,
    pub blending: Option<Blending>,
    pub augment: Option<AugmentStrength>,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub test: MetricsReport,
    pub history: TrainHistory,
    pub model: Mlp64,
}

pub fn train_config(cfg: &ExperimentConfig, method: Method, variant: Variant, seed: u64, noise_sigma: f64) -> TrainConfig {
    let mut template = cfg.consistency_template();
    if let Some(g) = variant.gamma {
        template.gamma = g;
    }
    if let Some(b) = variant.blending {
        template.blending = b;
    }
    TrainConfig {
        supervised: method.supervised_loss(cfg.focal_gamma),
        consistency: method.consistency(template),
        noise_sigma,
        augment: variant.augment.unwrap_or(cfg.train.augment),
        seed,
        ..cfg.train.clone()
    }
}

pub fn run_seed(cfg: &ExperimentConfig, method: Method, variant: Variant, seed: u64) -> CliResult<SeedRun> {
    let data = prepare_data(cfg, seed)?;
    let n_classes = data.labeled.n_classes();
    let table = match &cfg.frequencies {
        FrequencySource::Labeled => ClassFrequencyTable::from_labels(data.labeled.require_labels()?, n_classes)?,
        FrequencySource::Fixed(f) => {
            if f.len() != n_classes {
                return Err(CliError::ConfigField {
                    section: "train".into(),
                    key: "frequencies".into(),
                    line: None,
                    message: format!("{} entries for {n_classes} classes", f.len()),
                });
            }
            ClassFrequencyTable::new(f.clone())?
        }
    };
    let labeled = if method.wiring().resample_labeled {
        let mut rng = stream_rng(seed, Stream::Resample);
        sampling_baseline(&data.labeled, cfg.smote_k, &mut rng)?
    } else {
        data.labeled.clone()
    };
    let tc = train_config(cfg, method, variant, seed, data.noise_sigma);
    let dims = cfg.dims(data.labeled.dim(), n_classes);
    let td = TrainData::new(&labeled, &data.unlabeled, &data.val)?.with_table(table);
    let outcome = train::<f64>(&tc, &dims, &td)?;
    let test = evaluate(&outcome.model, &data.test)?;
    log::info!(
        "{method} seed {seed}: test uar {:.4}, best epoch {:?}",
        test.uar,
        outcome.history.best_epoch
    );
    Ok(SeedRun {
        seed,
        test,
        history: outcome.history,
        model: outcome.model,
    })
}

/// Runs every seed, in parallel, returning results in seed-list order.
pub fn run_seeds(cfg: &ExperimentConfig, method: Method, variant: Variant) -> CliResult<Vec<SeedRun>> {
    cfg.seeds
        .par_iter()
        .map(|&s| run_seed(cfg, method, variant, s))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub uar: f64,
    pub g_mean: f64,
    pub avg_auc: f64,
    pub per_class_recall: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub failed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricStats {
    pub uar: f64,
    pub g_mean: f64,
    pub avg_auc: f64,
    pub per_class_recall: Vec<f64>,
}

/// Test metrics across seeds for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub method: String,
    pub per_seed: Vec<SeedMetrics>,
    pub mean: MetricStats,
    /// Sample standard deviation (zero for a single seed).
    pub std: MetricStats,
}

impl Summary {
    pub fn from_runs(method: impl Into<String>, runs: &[SeedRun]) -> Self {
        let per_seed: Vec<SeedMetrics> = runs
            .iter()
            .map(|r| SeedMetrics {
                seed: r.seed,
                uar: r.test.uar,
                g_mean: r.test.g_mean,
                avg_auc: r.test.avg_auc,
                per_class_recall: r.test.per_class_recall.clone(),
                best_epoch: r.history.best_epoch,
                failed: r.history.failed.clone(),
            })
            .collect();
        let stat = |f: &dyn Fn(&SeedMetrics) -> f64| mean_std(&per_seed.iter().map(f).collect::<Vec<_>>());
        let (uar_m, uar_s) = stat(&|s| s.uar);
        let (g_m, g_s) = stat(&|s| s.g_mean);
        let (a_m, a_s) = stat(&|s| s.avg_auc);
        let n_classes = per_seed.first().map_or(0, |s| s.per_class_recall.len());
        let (rec_m, rec_s): (Vec<f64>, Vec<f64>) = (0..n_classes).map(|c| stat(&|s| s.per_class_recall[c])).unzip();
        Summary {
            method: method.into(),
            per_seed,
            mean: MetricStats {
                uar: uar_m,
                g_mean: g_m,
                avg_auc: a_m,
                per_class_recall: rec_m,
            },
            std: MetricStats {
                uar: uar_s,
                g_mean: g_s,
                avg_auc: a_s,
                per_class_recall: rec_s,
            },
        }
    }

    pub fn any_failed(&self) -> bool {
        self.per_seed.iter().any(|s| s.failed.is_some())
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
