//! Minibatch training with Adam and early stopping on validation accuracy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::LabeledImageSet;
use crate::diffgrad::{Adam, AdamConfig, Tensor};
use crate::error::{invalid, Error, Result};
use crate::model_zoo::Model;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            lr: 5e-3,
            seed: 0,
            patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(invalid(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    /// 0 when the untrained model was never beaten.
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub stopped_early: bool,
}

fn batch_of(set: &LabeledImageSet, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let images = idx.iter().map(|&i| set.image(i)).collect();
    let labels = idx.iter().map(|&i| set.labels[i] as usize).collect();
    (images, labels)
}

/// Predicted class per image.
pub fn predict(model: &Model, set: &LabeledImageSet, batch_size: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(set.len());
    let all: Vec<usize> = (0..set.len()).collect();
    for chunk in all.chunks(batch_size.max(1)) {
        let (images, _) = batch_of(set, chunk);
        let refs: Vec<&[f64]> = images.iter().map(|v| v.as_slice()).collect();
        let logits = model.logits(&refs)?;
        let k = model.spec.n_classes;
        for row in logits.data().chunks(k) {
            let best = row
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
                );
            out.push(best.0);
        }
    }
    Ok(out)
}

pub fn evaluate(model: &Model, set: &LabeledImageSet, batch_size: usize) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty set".into()));
    }
    let pred = predict(model, set, batch_size)?;
    let hits = pred
        .iter()
        .zip(&set.labels)
        .filter(|(p, &l)| **p == l as usize)
        .count();
    Ok(hits as f64 / set.len() as f64)
}

/// Trains `model` in place and leaves it holding the best-validation parameters.
/// `on_epoch` sees each record as it is produced.
pub fn train(
    model: &mut Model,
    train_set: &LabeledImageSet,
    val_set: &LabeledImageSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut best = model.snapshot();
    let mut best_val = evaluate(model, val_set, 256)?;
    let mut best_epoch = 0;
    let mut records = Vec::new();
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (images, labels) = batch_of(train_set, chunk);
            let refs: Vec<&[f64]> = images.iter().map(|v| v.as_slice()).collect();
            let (loss, grads) = model.loss_and_grad(&refs, &labels)?;
            if !loss.is_finite() {
                return Err(Error::NumericFailure(format!(
                    "loss became {loss} in epoch {epoch}"
                )));
            }
            total += loss * chunk.len() as f64;
            let grad_refs: Vec<&Tensor> = grads.iter().collect();
            adam.step(&mut model.params_mut(), &grad_refs)?;
        }
        let record = EpochRecord {
            epoch,
            train_loss: total / train_set.len() as f64,
            val_acc: evaluate(model, val_set, 256)?,
        };
        on_epoch(&record);
        let improved = record.val_acc > best_val;
        if improved {
            best_val = record.val_acc;
            best_epoch = epoch;
            best = model.snapshot();
        }
        records.push(record);
        if best_val >= 1.0 || (cfg.patience > 0 && epoch - best_epoch >= cfg.patience) {
            stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    model.restore(&best)?;
    Ok(TrainReport {
        records,
        best_epoch,
        best_val_acc: best_val,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{split, synth_glyph_set};
    use crate::model_zoo::{build_model, ModelRow, ModelSpec};

    #[test]
    fn rejects_bad_config() {
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            lr: f64::NAN,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn short_run_is_deterministic_and_restores_best() {
        let data = synth_glyph_set(48, 1).unwrap();
        let [tr, va, _] = split(&data, 32, 16, 0, 2).unwrap();
        let spec = ModelSpec {
            widths: vec![4],
            ..ModelSpec::toy(ModelRow::T2Strict)
        };
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let run = || {
            let mut m = build_model(&spec, 3).unwrap();
            let r = train(&mut m, &tr, &va, &cfg, |_| {}).unwrap();
            (m, r)
        };
        let (m1, r1) = run();
        let (m2, r2) = run();
        assert_eq!(r1, r2);
        assert_eq!(m1.snapshot(), m2.snapshot());
        assert!(!r1.records.is_empty());
        assert!((evaluate(&m1, &va, 8).unwrap() - r1.best_val_acc).abs() < 1e-12);
    }

    #[test]
    fn zero_epochs_keeps_initial_model() {
        let data = synth_glyph_set(8, 4).unwrap();
        let spec = ModelSpec::toy(ModelRow::T2Strict);
        let mut m = build_model(&spec, 0).unwrap();
        let before = m.snapshot();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let r = train(&mut m, &data, &data, &cfg, |_| {}).unwrap();
        assert!(r.records.is_empty());
        assert_eq!(m.snapshot(), before);
    }
}
