//! Training recipe: summed cross-entropy plus L1-L2 penalty, Adam with a
//! geometric learning-rate decay, and model selection on a held-out split.

pub mod adam;
pub mod gradcheck;
pub mod loss;

pub use adam::Adam;
pub use gradcheck::{grad_check, CoordCheck, GradCheckReport};
pub use loss::{
    cross_entropy, cross_entropy_labels, cross_entropy_logit_grad, l1_l2_grad, l1_l2_penalty, one_hot,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_split, EpochSet};
use crate::error::{MsnnError, Result};
use crate::kv::KvDoc;
use crate::model::{Mode, ModelGrads, MsnnModel};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    /// `lr0 · (1 − decay)^e`
    Geometric,
    /// `lr0 · exp(−decay · e)`
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr0: f64,
    pub decay_per_epoch: f64,
    pub schedule: LrSchedule,
    pub l1: f64,
    pub l2: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            lr0: 0.03,
            decay_per_epoch: 0.001,
            schedule: LrSchedule::Geometric,
            l1: 0.01,
            l2: 0.001,
            max_epochs: 200,
            patience: 20,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.batch_size == 0 {
            bad.push("batch_size must be >= 1".to_string());
        }
        if !(self.lr0 > 0.0) {
            bad.push(format!("lr0 must be > 0, got {}", self.lr0));
        }
        if !(0.0..1.0).contains(&self.decay_per_epoch) {
            bad.push(format!("decay_per_epoch must be in [0, 1), got {}", self.decay_per_epoch));
        }
        if self.patience > self.max_epochs {
            bad.push(format!("patience {} exceeds max_epochs {}", self.patience, self.max_epochs));
        }
        if self.l1 < 0.0 || self.l2 < 0.0 {
            bad.push("l1 and l2 must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            bad.push("Adam betas must be in [0, 1) and eps > 0".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            bad.push(format!("val_fraction must be in (0, 1), got {}", self.val_fraction));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(MsnnError::Config(bad.join("; ")))
        }
    }

    pub fn to_kv(&self, section: &str) -> KvDoc {
        let mut d = KvDoc::new();
        let k = |s: &str| format!("{section}.{s}");
        d.set(k("batch_size"), self.batch_size);
        d.set(k("lr0"), self.lr0);
        d.set(k("decay_per_epoch"), self.decay_per_epoch);
        d.set(k("schedule"), match self.schedule {
            LrSchedule::Geometric => "geometric",
            LrSchedule::Exponential => "exponential",
        });
        d.set(k("l1"), self.l1);
        d.set(k("l2"), self.l2);
        d.set(k("max_epochs"), self.max_epochs);
        d.set(k("patience"), self.patience);
        d.set(k("adam_beta1"), self.adam_beta1);
        d.set(k("adam_beta2"), self.adam_beta2);
        d.set(k("adam_eps"), self.adam_eps);
        d.set(k("val_fraction"), self.val_fraction);
        d.set(k("seed"), self.seed);
        d
    }

    /// Overrides defaults with whatever keys `doc` has in `section`.
    pub fn from_kv(doc: &KvDoc, section: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        let k = |s: &str| format!("{section}.{s}");
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = doc.parse_value(&k(stringify!($field)))? {
                    c.$field = v;
                }
            };
        }
        take!(batch_size);
        take!(lr0);
        take!(decay_per_epoch);
        take!(l1);
        take!(l2);
        take!(max_epochs);
        take!(patience);
        take!(adam_beta1);
        take!(adam_beta2);
        take!(adam_eps);
        take!(val_fraction);
        take!(seed);
        if let Some(s) = doc.get(&k("schedule")) {
            c.schedule = match s {
                "geometric" => LrSchedule::Geometric,
                "exponential" => LrSchedule::Exponential,
                other => return Err(MsnnError::Config(format!("unknown schedule {other:?}"))),
            };
        }
        Ok(c)
    }
}

pub fn lr_at_epoch(epoch: usize, cfg: &TrainConfig) -> f64 {
    match cfg.schedule {
        LrSchedule::Geometric => cfg.lr0 * (1.0 - cfg.decay_per_epoch).powi(epoch as i32),
        LrSchedule::Exponential => cfg.lr0 * (-cfg.decay_per_epoch * epoch as f64).exp(),
    }
}

/// Seeded stratified 9:1 (by default) split into training and validation sets.
pub fn split_train_val(data: &EpochSet, cfg: &TrainConfig) -> Result<(EpochSet, EpochSet)> {
    if data.len() < 10 {
        return Err(MsnnError::InvalidArgument(format!("need at least 10 samples to split, got {}", data.len())));
    }
    let (tr, va) = stratified_split(&data.labels, cfg.val_fraction, cfg.seed)?;
    Ok((data.subset(&tr), data.subset(&va)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStats {
    /// Summed cross-entropy of the batch.
    pub loss: f64,
    pub penalty: f64,
    /// `loss + penalty`, the quantity whose gradient is applied.
    pub objective: f64,
}

/// Indices of the trainable arrays in [`MsnnModel::params`] order.
fn trainable_slots(model: &MsnnModel) -> Vec<usize> {
    model.params().iter().enumerate().filter(|(_, p)| p.kind.trainable()).map(|(i, _)| i).collect()
}

/// Gradient of the regularised objective on one batch, plus its value.
pub fn objective_grads(
    model: &MsnnModel,
    batch: &[Tensor],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(StepStats, ModelGrads, crate::model::GradTape)> {
    let mut tape = model.forward_tape(batch, Mode::Train)?;
    let loss = cross_entropy_labels(labels, &tape.probs)?;
    let dz = cross_entropy_logit_grad(labels, &tape.probs);
    let (mut grads, _) = model.backward(&mut tape, &dz)?;
    let penalty = if cfg.l1 == 0.0 && cfg.l2 == 0.0 {
        0.0
    } else {
        grads.add_assign(&l1_l2_grad(model, cfg.l1, cfg.l2));
        l1_l2_penalty(model, cfg.l1, cfg.l2)
    };
    Ok((StepStats { loss, penalty, objective: loss + penalty }, grads, tape))
}

/// One optimisation step: gradient, Adam update, running-statistics update.
pub fn train_step(
    model: &mut MsnnModel,
    opt: &mut Adam,
    batch: &[Tensor],
    labels: &[usize],
    lr: f64,
    cfg: &TrainConfig,
) -> Result<StepStats> {
    let (stats, grads, tape) = objective_grads(model, batch, labels, cfg)?;
    if !stats.objective.is_finite() {
        return Err(MsnnError::NonFinite("training objective".into()));
    }
    let slots = trainable_slots(model);
    let g: Vec<&[f64]> = slots.iter().map(|&s| grads.grads[s].as_slice()).collect();
    {
        let mut params = model.params_mut();
        let mut views: Vec<&mut [f64]> = Vec::with_capacity(slots.len());
        let mut k = 0;
        for (i, p) in params.iter_mut().enumerate() {
            if k < slots.len() && slots[k] == i {
                views.push(p.data.as_mut_slice());
                k += 1;
            }
        }
        opt.step(&mut views, &g, lr)?;
    }
    model.apply_bn_update(&tape)?;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean cross-entropy per training sample.
    pub train_loss: f64,
    /// Mean regularised objective per batch.
    pub train_objective: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_accuracy: f64,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
    pub n_train: usize,
    pub n_val: usize,
    /// Where the selected model was written, if it was.
    pub best_checkpoint: Option<String>,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Training that stopped on an error, with the epochs completed so far.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct FitFailure {
    pub error: MsnnError,
    pub partial: Box<TrainReport>,
}

impl From<FitFailure> for MsnnError {
    fn from(f: FitFailure) -> Self {
        f.error
    }
}

/// Eval-mode loss and accuracy.
pub fn evaluate_loss(model: &MsnnModel, data: &EpochSet) -> Result<(f64, f64)> {
    let probs = model.predict(&data.epochs)?;
    let loss = cross_entropy_labels(&data.labels, &probs)? / data.len().max(1) as f64;
    let correct = probs.iter().zip(&data.labels).filter(|(p, &l)| crate::eval::argmax(p) == l).count();
    Ok((loss, correct as f64 / data.len().max(1) as f64))
}

/// Splits `data` 9:1 and trains on the larger part.
pub fn fit(model: MsnnModel, data: &EpochSet, cfg: &TrainConfig) -> std::result::Result<(MsnnModel, TrainReport), FitFailure> {
    let fail = |error| FitFailure { error, partial: Box::new(empty_report(0, 0)) };
    let (train, val) = split_train_val(data, cfg).map_err(fail)?;
    fit_split(model, &train, &val, cfg)
}

fn empty_report(n_train: usize, n_val: usize) -> TrainReport {
    TrainReport {
        epochs: Vec::new(),
        best_epoch: None,
        best_val_accuracy: f64::NAN,
        best_val_loss: f64::NAN,
        stop_reason: StopReason::MaxEpochs,
        n_train,
        n_val,
        best_checkpoint: None,
    }
}

/// Mini-batch training with validation-based selection and early stopping.
///
/// The selected epoch has the highest validation accuracy; ties go to the
/// lower validation loss, then to the earlier epoch. Training stops after
/// `patience` epochs without a new selection.
pub fn fit_split(
    mut model: MsnnModel,
    train: &EpochSet,
    val: &EpochSet,
    cfg: &TrainConfig,
) -> std::result::Result<(MsnnModel, TrainReport), FitFailure> {
    let mut report = empty_report(train.len(), val.len());
    macro_rules! bail {
        ($e:expr) => {
            return Err(FitFailure { error: $e, partial: Box::new(report) })
        };
    }
    if let Err(e) = cfg.validate() {
        bail!(e);
    }
    if train.is_empty() || val.is_empty() {
        bail!(MsnnError::InvalidArgument("training and validation sets must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<MsnnModel> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.max_epochs {
        let lr = lr_at_epoch(epoch, cfg);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut obj_sum, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<Tensor> = chunk.iter().map(|&i| train.epochs[i].clone()).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            match train_step(&mut model, &mut opt, &xs, &ys, lr, cfg) {
                Ok(s) => {
                    loss_sum += s.loss;
                    obj_sum += s.objective;
                    batches += 1;
                }
                Err(MsnnError::NonFinite(_)) => {
                    report.stop_reason = StopReason::Diverged;
                    bail!(MsnnError::Diverged { epoch });
                }
                Err(e) => bail!(e),
            }
        }
        let (val_loss, val_accuracy) = match evaluate_loss(&model, val) {
            Ok(v) => v,
            Err(e) => bail!(e),
        };
        if !val_loss.is_finite() {
            report.stop_reason = StopReason::Diverged;
            bail!(MsnnError::Diverged { epoch });
        }
        let rec = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            train_objective: obj_sum / batches as f64,
            val_loss,
            val_accuracy,
        };
        log::debug!(
            "epoch {epoch}: loss {:.4} val_loss {:.4} val_acc {:.3}",
            rec.train_loss,
            val_loss,
            val_accuracy
        );
        report.epochs.push(rec);
        let improved = match report.best_epoch {
            None => true,
            Some(_) => {
                val_accuracy > report.best_val_accuracy
                    || (val_accuracy == report.best_val_accuracy && val_loss < report.best_val_loss)
            }
        };
        if improved {
            report.best_epoch = Some(epoch);
            report.best_val_accuracy = val_accuracy;
            report.best_val_loss = val_loss;
            best = Some(model.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                report.stop_reason = StopReason::EarlyStop;
                break;
            }
        }
    }
    let best = best.unwrap_or(model);
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule() {
        let c = TrainConfig::default();
        assert_eq!(lr_at_epoch(0, &c), 0.03);
        assert!((lr_at_epoch(1, &c) - 0.02997).abs() < 1e-15);
        for e in 0..500 {
            assert!(lr_at_epoch(e + 1, &c) < lr_at_epoch(e, &c));
        }
        let x = TrainConfig { schedule: LrSchedule::Exponential, ..c.clone() };
        let rel = (lr_at_epoch(100, &x) - lr_at_epoch(100, &c)).abs() / lr_at_epoch(100, &c);
        assert!(rel < 1e-4);
    }

    #[test]
    fn config_validation_and_kv() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { batch_size: 0, patience: 300, ..Default::default() };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("batch_size") && msg.contains("patience"));
        let c = TrainConfig { lr0: 0.01, schedule: LrSchedule::Exponential, seed: 9, ..Default::default() };
        assert_eq!(TrainConfig::from_kv(&c.to_kv("train"), "train").unwrap(), c);
    }
}
