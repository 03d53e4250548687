//! Semi-supervised training loop: supervised loss on the labeled half of a
//! batch plus a weighted consistency loss on the unlabeled pairs, SGD with
//! momentum, and early stopping on validation UAR.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::augment::PerturbSpec;
use crate::autodiff::Tape;
use crate::data::{Batch, BatchComposer, Dataset};
use crate::error::{Error, Result};
use crate::losses::{graph, ClassFrequencyTable, ConsistencyConfig, SupervisedLoss};
use crate::metrics::{evaluate, MetricsReport};
use crate::model::Mlp;
use crate::optim::{sgd_update, OptimizerState, SgdConfig};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::scalar::Scalar;

/// Loss magnitude treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentStrength {
    Weak,
    /// Noise scaled by [`TrainConfig::strong_factor`].
    Strong,
}

/// How per-pair consistency losses are combined over the unlabeled half.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub sgd: SgdConfig,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub supervised: SupervisedLoss,
    /// `None` trains on the labeled pool only.
    pub consistency: Option<ConsistencyConfig>,
    pub consistency_reduction: Reduction,
    /// Weak-perturbation noise level for feature vectors.
    pub noise_sigma: f64,
    pub augment: AugmentStrength,
    pub strong_factor: f64,
    pub augment_labeled: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            sgd: SgdConfig::default(),
            batch_labeled: 8,
            batch_unlabeled: 22,
            supervised: SupervisedLoss::CrossEntropy,
            consistency: Some(ConsistencyConfig::default()),
            consistency_reduction: Reduction::Mean,
            noise_sigma: 0.3,
            augment: AugmentStrength::Weak,
            strong_factor: 3.0,
            augment_labeled: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let SgdConfig {
            lr,
            momentum,
            weight_decay,
            ..
        } = self.sgd;
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("lr {lr} must be positive")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum {momentum} outside [0, 1)")));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay {weight_decay} must be >= 0")));
        }
        if self.batch_labeled == 0 {
            return Err(Error::Config("batch_labeled must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma {} must be >= 0", self.noise_sigma)));
        }
        if !(self.strong_factor >= 1.0 && self.strong_factor.is_finite()) {
            return Err(Error::Config(format!("strong_factor {} must be >= 1", self.strong_factor)));
        }
        if let SupervisedLoss::Focal { gamma } = self.supervised {
            if !(gamma >= 0.0 && gamma.is_finite()) {
                return Err(Error::Config(format!("focal gamma {gamma} must be >= 0")));
            }
        }
        if let Some(c) = &self.consistency {
            c.validate()?;
        }
        Ok(())
    }

    /// Noise level actually applied, after the strong multiplier.
    pub fn effective_sigma(&self) -> f64 {
        match self.augment {
            AugmentStrength::Weak => self.noise_sigma,
            AugmentStrength::Strong => self.noise_sigma * self.strong_factor,
        }
    }
}

/// Pools a run trains and early-stops on.
#[derive(Debug, Clone)]
pub struct TrainData<'a> {
    pub labeled: &'a Dataset,
    pub unlabeled: &'a Dataset,
    pub val: &'a Dataset,
    /// Frequencies that drive the class-aware losses.
    pub table: ClassFrequencyTable<f64>,
}

impl<'a> TrainData<'a> {
    /// Uses the labeled pool's own class frequencies.
    pub fn new(labeled: &'a Dataset, unlabeled: &'a Dataset, val: &'a Dataset) -> Result<Self> {
        let table = ClassFrequencyTable::from_labels(labeled.require_labels()?, labeled.n_classes())?;
        Ok(Self {
            labeled,
            unlabeled,
            val,
            table,
        })
    }

    pub fn with_table(mut self, table: ClassFrequencyTable<f64>) -> Self {
        self.table = table;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub supervised: f64,
    pub consistency: f64,
    pub total: f64,
}

/// Losses and parameter gradients for one batch, without updating anything.
pub fn step_gradients<T: Scalar>(
    model: &Mlp<T>,
    batch: &Batch,
    table: &ClassFrequencyTable<T>,
    cfg: &TrainConfig,
) -> Result<(StepLosses, Vec<Vec<T>>)> {
    let tape = Tape::new();
    let vars = model.register(&tape);
    let to_t = |x: &[f64]| -> Vec<T> { x.iter().map(|v| T::of(*v)).collect() };

    let mut sup_terms = Vec::with_capacity(batch.labeled.len());
    for (x, label) in &batch.labeled {
        let xv = tape.vector(to_t(x));
        let p = model.proba_on(&tape, &vars, xv)?;
        sup_terms.push(graph::supervised_loss(&tape, cfg.supervised, p, *label, table)?);
    }
    let sup = tape.mean(&sup_terms)?;

    let (total, cons_value) = match &cfg.consistency {
        Some(cc) if !batch.unlabeled.is_empty() => {
            let mut terms = Vec::with_capacity(batch.unlabeled.len());
            for (orig, aug) in &batch.unlabeled {
                let z = model.proba_on(&tape, &vars, tape.vector(to_t(orig)))?;
                let z_hat = model.proba_on(&tape, &vars, tape.vector(to_t(aug)))?;
                terms.push(graph::consistency_loss(&tape, z, z_hat, table, cc)?);
            }
            let cons = match cfg.consistency_reduction {
                Reduction::Mean => tape.mean(&terms)?,
                Reduction::Sum => tape.add_n(&terms)?,
            };
            let weighted = tape.scale(cons, T::of(cc.unsup_weight));
            (tape.add(sup, weighted)?, cons.item().as_f64())
        }
        _ => (sup, 0.0),
    };
    tape.backward(total)?;
    let losses = StepLosses {
        supervised: sup.item().as_f64(),
        consistency: cons_value,
        total: total.item().as_f64(),
    };
    Ok((losses, vars.grads()))
}

/// Forward, backward and one SGD update on `batch`.
pub fn train_step<T: Scalar>(
    model: &mut Mlp<T>,
    batch: &Batch,
    table: &ClassFrequencyTable<T>,
    cfg: &TrainConfig,
    state: &mut OptimizerState<T>,
) -> Result<StepLosses> {
    let (losses, grads) = step_gradients(model, batch, table, cfg)?;
    if !losses.total.is_finite() || losses.total.abs() > DIVERGENCE_LIMIT {
        return Err(Error::NumericInput(format!("loss {}", losses.total)));
    }
    sgd_update(model, &grads, state, &cfg.sgd)?;
    Ok(losses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub sup_loss: f64,
    pub cons_loss: f64,
    pub val: MetricsReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub best_val_uar: Option<f64>,
    /// Diagnostic of an aborted run.
    pub failed: Option<String>,
}

impl TrainHistory {
    /// CSV with columns `epoch,sup_loss,cons_loss,val_uar,val_gmean,val_avg_auc`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,sup_loss,cons_loss,val_uar,val_gmean,val_avg_auc\n");
        for r in &self.epochs {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch, r.sup_loss, r.cons_loss, r.val.uar, r.val.g_mean, r.val.avg_auc
            )
            .unwrap();
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters of the best validation epoch (initial parameters if no
    /// epoch completed).
    pub model: Mlp<T>,
    pub history: TrainHistory,
}

/// Labeled-pool passes define epochs: `ceil(n_labeled / batch_labeled)` steps each.
pub fn steps_per_epoch(n_labeled: usize, batch_labeled: usize) -> usize {
    n_labeled.div_ceil(batch_labeled)
}

/// Full run. Divergence ends the run early with `history.failed` set and
/// the best parameters seen so far; configuration problems are errors.
pub fn train<T: Scalar>(cfg: &TrainConfig, dims: &[usize], data: &TrainData<'_>) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let n_classes = data.labeled.n_classes();
    if dims.first() != Some(&data.labeled.dim()) || dims.last() != Some(&n_classes) {
        return Err(Error::Config(format!(
            "model dims {dims:?} do not fit {}-d features with {n_classes} classes",
            data.labeled.dim()
        )));
    }
    if data.val.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    let mut model = Mlp::<T>::init(dims, derive_seed(cfg.seed, Stream::Init))?;
    let mut best = model.clone();
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok(TrainOutcome { model, history });
    }

    let table: ClassFrequencyTable<T> = data.table.cast();
    let mut state = OptimizerState::for_model(&model);
    let mut composer = BatchComposer::new(
        data.labeled,
        data.unlabeled,
        cfg.batch_labeled,
        cfg.batch_unlabeled,
        derive_seed(cfg.seed, Stream::Batching),
    )?
    .augment_labeled(cfg.augment_labeled);
    let mut aug_rng = stream_rng(cfg.seed, Stream::Augment);
    let spec = PerturbSpec::vector(cfg.effective_sigma(), 0);
    let steps = steps_per_epoch(data.labeled.len(), cfg.batch_labeled);

    'epochs: for epoch in 1..=cfg.epochs {
        let (mut sup_sum, mut cons_sum) = (0.0, 0.0);
        for step in 0..steps {
            let batch = composer.compose(data.labeled, data.unlabeled, &spec, &mut aug_rng)?;
            match train_step(&mut model, &batch, &table, cfg, &mut state) {
                Ok(l) => {
                    sup_sum += l.supervised;
                    cons_sum += l.consistency;
                }
                Err(Error::NumericInput(detail)) => {
                    let err = Error::Divergence { epoch, step, detail };
                    log::error!("{err}");
                    history.failed = Some(err.to_string());
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let val = evaluate(&model, data.val)?;
        if history.best_val_uar.is_none_or(|b| val.uar > b) {
            history.best_val_uar = Some(val.uar);
            history.best_epoch = Some(epoch);
            best = model.clone();
        }
        log::debug!("epoch {epoch}: val uar {:.4}", val.uar);
        history.epochs.push(EpochRecord {
            epoch,
            sup_loss: sup_sum / steps as f64,
            cons_loss: cons_sum / steps as f64,
            val,
        });
    }
    Ok(TrainOutcome {
        model: best,
        history,
    })
}
