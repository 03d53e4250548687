//! Experiment configuration: `[section]` headers followed by `key = value`
//! lines. `#` and `;` start comments, lists are comma separated, booleans
//! are `true`/`false`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use imbassl::losses::{Blending, ConsistencyConfig};
use imbassl::trainer::{AugmentStrength, Reduction, TrainConfig};

use crate::error::{CliError, CliResult};
use crate::methods::Method;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

/// Syntax-level view of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut raw = RawConfig::default();
        let mut current: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = strip_comment(line).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| CliError::ConfigSyntax {
                    line: line_no,
                    message: format!("unterminated section header `{line}`"),
                })?;
                let name = name.trim().to_ascii_lowercase();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(CliError::ConfigSyntax {
                        line: line_no,
                        message: format!("unknown section [{name}]; expected one of {}", SECTIONS.join(", ")),
                    });
                }
                if raw.sections.contains_key(&name) {
                    return Err(CliError::ConfigSyntax {
                        line: line_no,
                        message: format!("section [{name}] appears twice"),
                    });
                }
                raw.sections.insert(name.clone(), BTreeMap::new());
                current = Some(name);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CliError::ConfigSyntax {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let section = current.as_ref().ok_or_else(|| CliError::ConfigSyntax {
                line: line_no,
                message: "key outside of any [section]".into(),
            })?;
            let key = key.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(CliError::ConfigSyntax {
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            let entries = raw.sections.get_mut(section).unwrap();
            if entries.contains_key(&key) {
                return Err(CliError::ConfigSyntax {
                    line: line_no,
                    message: format!("duplicate key `{key}` in [{section}]"),
                });
            }
            entries.insert(
                key,
                Entry {
                    value: value.trim().to_string(),
                    line: line_no,
                },
            );
        }
        Ok(raw)
    }

    fn section(&self, name: &str) -> Section<'_> {
        Section {
            name: name.to_string(),
            entries: self.sections.get(name),
            used: Default::default(),
        }
    }
}

const SECTIONS: &[&str] = &["dataset", "model", "train", "experiment"];

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Typed access to one section; remembers which keys were read so leftovers
/// can be reported.
struct Section<'a> {
    name: String,
    entries: Option<&'a BTreeMap<String, Entry>>,
    used: std::cell::RefCell<Vec<String>>,
}

impl Section<'_> {
    fn entry(&self, key: &str) -> Option<&Entry> {
        self.used.borrow_mut().push(key.to_string());
        self.entries.and_then(|e| e.get(key))
    }

    fn err(&self, key: &str, line: Option<usize>, message: impl Into<String>) -> CliError {
        CliError::ConfigField {
            section: self.name.clone(),
            key: key.to_string(),
            line,
            message: message.into(),
        }
    }

    fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|_| self.err(key, Some(e.line), format!("cannot parse `{}`", e.value))),
        }
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&self, key: &str) -> CliResult<T> {
        self.get(key)?.ok_or_else(|| self.err(key, None, "missing required key"))
    }

    fn get_bool(&self, key: &str) -> CliResult<Option<bool>> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => match e.value.as_str() {
                "true" => Ok(Some(true)),
                "false" => Ok(Some(false)),
                other => Err(self.err(key, Some(e.line), format!("expected true or false, got `{other}`"))),
            },
        }
    }

    fn get_list<T: FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => parse_list(&e.value)
                .map(Some)
                .map_err(|bad| self.err(key, Some(e.line), format!("cannot parse list item `{bad}`"))),
        }
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.and_then(|e| e.get(key)).map(|e| e.line)
    }

    fn reject_unknown(&self) -> CliResult<()> {
        let used = self.used.borrow();
        if let Some(entries) = self.entries {
            if let Some((k, e)) = entries.iter().find(|(k, _)| !used.contains(k)) {
                return Err(self.err(k, Some(e.line), "unknown key"));
            }
        }
        Ok(())
    }
}

/// Parses a comma-separated list; on failure returns the offending item.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| t.to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSource {
    pub class_fractions: Vec<f64>,
    pub dim: usize,
    pub cov_scale: f64,
    /// Pairwise distance between class means; defaults to `2 * cov_scale`.
    pub separation: f64,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Fixed data seed; otherwise each run derives one from its own seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvSource {
    pub path: PathBuf,
    pub n_classes: Option<usize>,
    /// Share of the training split that keeps its labels.
    pub labeled_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Gaussian(GaussianSource),
    Csv(CsvSource),
}

/// Which class frequencies drive the class-aware losses.
#[derive(Debug, Clone, PartialEq)]
pub enum FrequencySource {
    Labeled,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Hidden layer widths; input and output sizes come from the data.
    pub hidden: Vec<usize>,
    /// Template for every run; `consistency` holds the shared
    /// gamma/beta/blending/weight settings and is rewired per method.
    pub train: TrainConfig,
    /// Explicit perturbation level; otherwise 0.3 within-class std.
    pub noise_sigma: Option<f64>,
    pub focal_gamma: f64,
    pub smote_k: usize,
    pub frequencies: FrequencySource,
    pub method: Method,
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::ConfigFile {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        if let DatasetSource::Csv(csv) = &mut cfg.dataset {
            if csv.path.is_relative() {
                if let Some(dir) = path.parent() {
                    csv.path = dir.join(&csv.path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let raw = RawConfig::parse(text)?;
        let dataset = parse_dataset(&raw)?;
        let (hidden, explicit_dims) = parse_model(&raw)?;
        let (train, noise_sigma, focal_gamma, smote_k, frequencies) = parse_train(&raw)?;
        let exp = raw.section("experiment");
        let method_name: String = exp.get_or("method", "uda-abcl".to_string())?;
        let method = Method::from_name(&method_name).ok_or_else(|| {
            exp.err(
                "method",
                exp.line_of("method"),
                format!("unknown method `{method_name}`; valid: {}", Method::names().join(", ")),
            )
        })?;
        let seeds = exp.get_list::<u64>("seeds")?.unwrap_or_else(|| vec![0]);
        if seeds.is_empty() {
            return Err(exp.err("seeds", exp.line_of("seeds"), "empty seed list"));
        }
        exp.reject_unknown()?;

        let cfg = ExperimentConfig {
            dataset,
            hidden,
            train,
            noise_sigma,
            focal_gamma,
            smote_k,
            frequencies,
            method,
            seeds,
        };
        if let Some((dims, line)) = explicit_dims {
            if let DatasetSource::Gaussian(g) = &cfg.dataset {
                let expect = cfg.dims(g.dim, g.class_fractions.len());
                if dims != expect {
                    return Err(CliError::ConfigField {
                        section: "model".into(),
                        key: "dims".into(),
                        line: Some(line),
                        message: format!("dims {dims:?} do not match the dataset, expected {expect:?}"),
                    });
                }
            }
        }
        Ok(cfg)
    }

    pub fn dims(&self, input: usize, n_classes: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(&self.hidden);
        dims.push(n_classes);
        dims
    }

    /// The shared consistency settings (gamma, beta, blending, weight).
    pub fn consistency_template(&self) -> ConsistencyConfig {
        self.train.consistency.unwrap_or_default()
    }
}

fn parse_dataset(raw: &RawConfig) -> CliResult<DatasetSource> {
    let s = raw.section("dataset");
    let kind: String = s.get_or("kind", "gaussian".to_string())?;
    let source = match kind.as_str() {
        "gaussian" => {
            let class_fractions = s
                .get_list::<f64>("class_fractions")?
                .unwrap_or_else(|| vec![0.11, 0.67, 0.06, 0.03, 0.11, 0.01, 0.01]);
            let total: f64 = class_fractions.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(s.err(
                    "class_fractions",
                    s.line_of("class_fractions"),
                    format!("fractions sum to {total}, expected 1"),
                ));
            }
            let cov_scale: f64 = s.get_or("cov_scale", 1.0)?;
            if !(cov_scale > 0.0 && cov_scale.is_finite()) {
                return Err(s.err("cov_scale", s.line_of("cov_scale"), "must be positive"));
            }
            let separation = s.get_or("separation", 2.0 * cov_scale)?;
            DatasetSource::Gaussian(GaussianSource {
                class_fractions,
                dim: s.get_or("dim", 8)?,
                cov_scale,
                separation,
                n_labeled: s.get_or("n_labeled", 300)?,
                n_unlabeled: s.get_or("n_unlabeled", 3000)?,
                n_val: s.get_or("n_val", 600)?,
                n_test: s.get_or("n_test", 1200)?,
                seed: s.get("seed")?,
            })
        }
        "csv" => {
            let labeled_fraction = s.get_or("labeled_fraction", 0.1)?;
            if !(labeled_fraction > 0.0 && labeled_fraction <= 1.0) {
                return Err(s.err("labeled_fraction", s.line_of("labeled_fraction"), "must lie in (0, 1]"));
            }
            DatasetSource::Csv(CsvSource {
                path: PathBuf::from(s.require::<String>("path")?),
                n_classes: s.get("n_classes")?,
                labeled_fraction,
            })
        }
        other => {
            return Err(s.err("kind", s.line_of("kind"), format!("expected gaussian or csv, got `{other}`")));
        }
    };
    s.reject_unknown()?;
    Ok(source)
}

type ModelSection = (Vec<usize>, Option<(Vec<usize>, usize)>);

fn parse_model(raw: &RawConfig) -> CliResult<ModelSection> {
    let s = raw.section("model");
    let hidden = s.get_list::<usize>("hidden")?;
    let dims = s.get_list::<usize>("dims")?;
    let out = match (hidden, dims) {
        (Some(_), Some(_)) => {
            return Err(s.err("dims", s.line_of("dims"), "give either hidden or dims, not both"));
        }
        (Some(h), None) => (h, None),
        (None, Some(d)) => {
            if d.len() < 2 {
                return Err(s.err("dims", s.line_of("dims"), "need at least input and output sizes"));
            }
            (d[1..d.len() - 1].to_vec(), Some((d, s.line_of("dims").unwrap())))
        }
        (None, None) => (vec![32, 32], None),
    };
    if out.0.contains(&0) {
        return Err(s.err("hidden", None, "layer widths must be positive"));
    }
    s.reject_unknown()?;
    Ok(out)
}

type TrainSection = (TrainConfig, Option<f64>, f64, usize, FrequencySource);

fn parse_train(raw: &RawConfig) -> CliResult<TrainSection> {
    let s = raw.section("train");
    let d = TrainConfig::default();
    let dc = ConsistencyConfig::default();
    let mut t = TrainConfig {
        epochs: s.get_or("epochs", d.epochs)?,
        batch_labeled: s.get_or("batch_labeled", d.batch_labeled)?,
        batch_unlabeled: s.get_or("batch_unlabeled", d.batch_unlabeled)?,
        strong_factor: s.get_or("strong_factor", d.strong_factor)?,
        augment_labeled: s.get_bool("augment_labeled")?.unwrap_or(d.augment_labeled),
        ..d.clone()
    };
    t.sgd.lr = s.get_or("lr", d.sgd.lr)?;
    t.sgd.momentum = s.get_or("momentum", d.sgd.momentum)?;
    t.sgd.weight_decay = s.get_or("weight_decay", d.sgd.weight_decay)?;
    t.sgd.decay_biases = s.get_bool("decay_biases")?.unwrap_or(d.sgd.decay_biases);
    t.augment = match s.get::<String>("augment")?.as_deref() {
        None | Some("weak") => AugmentStrength::Weak,
        Some("strong") => AugmentStrength::Strong,
        Some(other) => {
            return Err(s.err("augment", s.line_of("augment"), format!("expected weak or strong, got `{other}`")));
        }
    };
    t.consistency_reduction = match s.get::<String>("consistency_reduction")?.as_deref() {
        None | Some("mean") => Reduction::Mean,
        Some("sum") => Reduction::Sum,
        Some(other) => {
            return Err(s.err(
                "consistency_reduction",
                s.line_of("consistency_reduction"),
                format!("expected mean or sum, got `{other}`"),
            ));
        }
    };
    let blending = match s.get::<String>("blending")?.as_deref() {
        None => dc.blending,
        Some(name) => parse_blending(name)
            .ok_or_else(|| s.err("blending", s.line_of("blending"), format!("expected always or selective, got `{name}`")))?,
    };
    let cons = ConsistencyConfig {
        gamma: s.get_or("gamma", dc.gamma)?,
        beta: s.get_or("beta", dc.beta)?,
        unsup_weight: s.get_or("unsup_weight", dc.unsup_weight)?,
        blending,
        ..dc
    };
    t.consistency = Some(cons);
    let noise_sigma = s.get::<f64>("noise_sigma")?;
    let focal_gamma = s.get_or("focal_gamma", 1.0)?;
    let smote_k = s.get_or("smote_k", 5usize)?;
    if smote_k == 0 {
        return Err(s.err("smote_k", s.line_of("smote_k"), "must be at least 1"));
    }
    let frequencies = match s.entry("frequencies") {
        None => FrequencySource::Labeled,
        Some(e) if e.value == "labeled" => FrequencySource::Labeled,
        Some(e) => FrequencySource::Fixed(
            parse_list(&e.value)
                .map_err(|bad| s.err("frequencies", Some(e.line), format!("expected `labeled` or a list, got `{bad}`")))?,
        ),
    };
    if let Err(e) = cons.validate().and_then(|_| {
        let mut check = t.clone();
        check.noise_sigma = noise_sigma.unwrap_or(0.0);
        check.supervised = imbassl::losses::SupervisedLoss::Focal { gamma: focal_gamma };
        check.validate()
    }) {
        return Err(s.err("*", None, e.to_string()));
    }
    s.reject_unknown()?;
    Ok((t, noise_sigma, focal_gamma, smote_k, frequencies))
}

pub fn parse_blending(name: &str) -> Option<Blending> {
    match name {
        "always" | "always-on" => Some(Blending::AlwaysOn),
        "selective" => Some(Blending::Selective),
        _ => None,
    }
}
