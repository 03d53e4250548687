//! The runner's commands. Each returns its results in structured form and
//! writes its artifacts under the output directory once every seed is done.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use imbassl::losses::Blending;
use imbassl::metrics::{evaluate, predict_all, roc_csv, MetricsReport};
use imbassl::trainer::AugmentStrength;
use imbassl::Mlp64;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::methods::Method;
use crate::runner::{prepare_data, run_seeds, Summary, Variant};

pub const DEFAULT_GAMMAS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("create {}", dir.display()), e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(format!("write {}", path.display()), e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn seed_dir(out: &Path, method: Method, seed: u64) -> PathBuf {
    out.join(method.name()).join(format!("seed-{seed}"))
}

fn fail_if_any(summaries: &[&Summary]) -> CliResult<()> {
    let failed: Vec<String> = summaries
        .iter()
        .flat_map(|s| {
            s.per_seed
                .iter()
                .filter_map(move |r| r.failed.as_ref().map(|f| format!("{} seed {}: {f}", s.method, r.seed)))
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(failed.join("; ")))
    }
}

/// Trains the configured method on every seed. Writes per-seed
/// `history.csv` and `best.ckpt` plus `summary.json`.
pub fn train(cfg: &ExperimentConfig, out: &Path) -> CliResult<Summary> {
    let method = cfg.method;
    let runs = run_seeds(cfg, method, Variant::default())?;
    for r in &runs {
        let dir = seed_dir(out, method, r.seed);
        write_file(&dir.join("history.csv"), &r.history.to_csv())?;
        write_file(&dir.join("best.ckpt"), &r.model.to_checkpoint_string())?;
    }
    let summary = Summary::from_runs(method.name(), &runs);
    write_file(&out.join(method.name()).join("summary.json"), &to_json(&summary))?;
    fail_if_any(&[&summary])?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedEvaluation {
    pub seed: u64,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub method: String,
    pub per_seed: Vec<SeedEvaluation>,
}

/// Scores saved checkpoints on each seed's test split. Without an explicit
/// checkpoint the ones written by `train` under `out` are used.
pub fn evaluate_checkpoints(cfg: &ExperimentConfig, out: &Path, checkpoint: Option<&Path>) -> CliResult<Evaluation> {
    let method = cfg.method;
    let mut per_seed = Vec::new();
    for &seed in &cfg.seeds {
        let path = checkpoint
            .map(Path::to_path_buf)
            .unwrap_or_else(|| seed_dir(out, method, seed).join("best.ckpt"));
        if !path.exists() {
            return Err(CliError::Usage(format!("checkpoint {} not found", path.display())));
        }
        let model = Mlp64::load_checkpoint(&path)?;
        let data = prepare_data(cfg, seed)?;
        let metrics = evaluate(&model, &data.test)?;
        let probs = predict_all(&model, &data.test)?;
        let roc = roc_csv(&probs, data.test.require_labels()?, data.test.n_classes())?;
        write_file(&seed_dir(out, method, seed).join("roc.csv"), &roc)?;
        per_seed.push(SeedEvaluation { seed, metrics });
    }
    let evaluation = Evaluation {
        method: method.name().to_string(),
        per_seed,
    };
    write_file(&out.join(method.name()).join("evaluation.json"), &to_json(&evaluation))?;
    Ok(evaluation)
}

fn recall_headers(n: usize) -> String {
    (0..n).map(|c| format!(",recall_{c}")).collect()
}

fn recall_cells(r: &[f64]) -> String {
    r.iter().map(|v| format!(",{v}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<Summary>,
    /// Row whose UAR the deltas are taken against.
    pub baseline: usize,
}

impl Comparison {
    pub fn delta(&self, row: usize) -> f64 {
        self.rows[row].mean.uar - self.rows[self.baseline].mean.uar
    }

    /// Columns `algorithm,uar,g_mean,avg_auc,recall_0..,delta_uar` with
    /// seed means.
    pub fn to_csv(&self) -> String {
        let n = self.rows.first().map_or(0, |r| r.mean.per_class_recall.len());
        let mut s = format!("algorithm,uar,g_mean,avg_auc{},delta_uar\n", recall_headers(n));
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(
                s,
                "{},{},{},{}{},{}",
                r.method,
                r.mean.uar,
                r.mean.g_mean,
                r.mean.avg_auc,
                recall_cells(&r.mean.per_class_recall),
                self.delta(i)
            )
            .unwrap();
        }
        s
    }

    pub fn to_text(&self) -> String {
        let n = self.rows.first().map_or(0, |r| r.mean.per_class_recall.len());
        let mut s = format!("{:<22} {:>7} {:>7} {:>7}", "algorithm", "UAR", "G-mean", "AUC");
        for c in 0..n {
            write!(s, " {:>7}", format!("rec{c}")).unwrap();
        }
        s.push_str("   delta\n");
        for (i, r) in self.rows.iter().enumerate() {
            write!(s, "{:<22} {:>7.4} {:>7.4} {:>7.4}", r.method, r.mean.uar, r.mean.g_mean, r.mean.avg_auc).unwrap();
            for v in &r.mean.per_class_recall {
                write!(s, " {v:>7.4}").unwrap();
            }
            let d = self.delta(i);
            let mark = if i != self.baseline && d > 0.0 { " *" } else { "" };
            writeln!(s, " {d:>+7.4}{mark}").unwrap();
        }
        s
    }
}

/// One row per method, seed means; deltas are against `uda` when present.
pub fn compare(cfg: &ExperimentConfig, methods: &[Method], out: &Path) -> CliResult<Comparison> {
    if methods.len() < 2 {
        return Err(CliError::Usage("compare needs at least two methods".into()));
    }
    let mut rows = Vec::with_capacity(methods.len());
    for &m in methods {
        let runs = run_seeds(cfg, m, Variant::default())?;
        rows.push(Summary::from_runs(m.name(), &runs));
    }
    let baseline = methods.iter().position(|m| *m == Method::Uda).unwrap_or(0);
    let cmp = Comparison { rows, baseline };
    write_file(&out.join("compare.csv"), &cmp.to_csv())?;
    fail_if_any(&cmp.rows.iter().collect::<Vec<_>>())?;
    Ok(cmp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub blending: Blending,
    pub gamma: f64,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub method: Method,
    pub rows: Vec<SweepRow>,
}

impl Sweep {
    pub fn row(&self, blending: Blending, gamma: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.blending == blending && r.gamma == gamma)
    }

    /// Columns `blending,gamma,recall_0..,uar,g_mean,avg_auc`.
    pub fn to_csv(&self) -> String {
        let n = self.rows.first().map_or(0, |r| r.summary.mean.per_class_recall.len());
        let mut s = format!("blending,gamma{},uar,g_mean,avg_auc\n", recall_headers(n));
        for r in &self.rows {
            let m = &r.summary.mean;
            writeln!(
                s,
                "{},{}{},{},{},{}",
                r.blending.name(),
                r.gamma,
                recall_cells(&m.per_class_recall),
                m.uar,
                m.g_mean,
                m.avg_auc
            )
            .unwrap();
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} gamma sweep\n", self.method);
        for r in &self.rows {
            let m = &r.summary.mean;
            write!(s, "{:<10} {:>5}", r.blending.name(), r.gamma).unwrap();
            for v in &m.per_class_recall {
                write!(s, " {v:>7.4}").unwrap();
            }
            writeln!(s, "  UAR {:.4}", m.uar).unwrap();
        }
        s
    }
}

pub fn check_gammas(gammas: &[f64]) -> CliResult<()> {
    if gammas.is_empty() {
        return Err(CliError::Usage("empty gamma list".into()));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
        return Err(CliError::Usage(format!("gamma {g} outside (0, 1]")));
    }
    Ok(())
}

fn abcl_method(cfg: &ExperimentConfig) -> Method {
    if cfg.method.uses_abcl() {
        cfg.method
    } else {
        Method::UdaAbcl
    }
}

/// Per-class recall and UAR for each gamma and blending mode, sorted by
/// gamma. Each row's summary is also written as JSON.
pub fn sweep_gamma(cfg: &ExperimentConfig, gammas: &[f64], blendings: &[Blending], out: &Path) -> CliResult<Sweep> {
    check_gammas(gammas)?;
    let method = abcl_method(cfg);
    let mut sorted = gammas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut rows = Vec::new();
    for &gamma in &sorted {
        for &blending in blendings {
            let variant = Variant {
                gamma: Some(gamma),
                blending: Some(blending),
                augment: None,
            };
            let runs = run_seeds(cfg, method, variant)?;
            let summary = Summary::from_runs(method.name(), &runs);
            let name = format!("{}-gamma-{gamma}.json", blending.name());
            write_file(&out.join("sweep_gamma").join(name), &to_json(&summary))?;
            rows.push(SweepRow {
                blending,
                gamma,
                summary,
            });
        }
    }
    let sweep = Sweep { method, rows };
    write_file(&out.join("sweep_gamma.csv"), &sweep.to_csv())?;
    fail_if_any(&sweep.rows.iter().map(|r| &r.summary).collect::<Vec<_>>())?;
    Ok(sweep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub algorithm: String,
    pub augment: AugmentStrength,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ablation {
    pub rows: Vec<AblationRow>,
}

impl Ablation {
    pub fn row(&self, algorithm: &str, augment: AugmentStrength) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.algorithm == algorithm && r.augment == augment)
    }

    /// Columns `algorithm,augmentation,uar,g_mean,avg_auc`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("algorithm,augmentation,uar,g_mean,avg_auc\n");
        for r in &self.rows {
            let m = &r.summary.mean;
            writeln!(s, "{},{},{},{},{}", r.algorithm, strength_name(r.augment), m.uar, m.g_mean, m.avg_auc).unwrap();
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let m = &r.summary.mean;
            writeln!(
                s,
                "{:<22} {:<7} UAR {:.4}  G-mean {:.4}  AUC {:.4}",
                r.algorithm,
                strength_name(r.augment),
                m.uar,
                m.g_mean,
                m.avg_auc
            )
            .unwrap();
        }
        s
    }
}

fn strength_name(a: AugmentStrength) -> &'static str {
    match a {
        AugmentStrength::Weak => "weak",
        AugmentStrength::Strong => "strong",
    }
}

/// `uda` and the ABCL method, each with weak and strong perturbation.
pub fn ablate_aug(cfg: &ExperimentConfig, out: &Path) -> CliResult<Ablation> {
    let mut rows = Vec::with_capacity(4);
    for method in [Method::Uda, abcl_method(cfg)] {
        for augment in [AugmentStrength::Weak, AugmentStrength::Strong] {
            let variant = Variant {
                augment: Some(augment),
                ..Variant::default()
            };
            let runs = run_seeds(cfg, method, variant)?;
            rows.push(AblationRow {
                algorithm: method.name().to_string(),
                augment,
                summary: Summary::from_runs(method.name(), &runs),
            });
        }
    }
    let ablation = Ablation { rows };
    write_file(&out.join("ablate_aug.csv"), &ablation.to_csv())?;
    fail_if_any(&ablation.rows.iter().map(|r| &r.summary).collect::<Vec<_>>())?;
    Ok(ablation)
}
