use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::grad::{accumulate_example, bce_with_logits, LossParts};
use super::model::{predict_logit, ModelParams};
use super::optim::{clip_grad_norm, Optimizer, OptimizerState};
use crate::noise::{apply_noise, corrupt_for_eval, train_noise, NoiseSpec};
use crate::rng;
use crate::synth::MultimodalSequence;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Weight λ of the rank regularizer.
    pub reg_weight: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            reg_weight: 0.0,
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            optimizer: Optimizer::default(),
            grad_clip: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reg_weight >= 0.0) || !self.reg_weight.is_finite() {
            return Err(Error::invalid("reg_weight must be finite and nonnegative"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be finite and nonnegative"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::invalid("grad_clip must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Training means, measured on each minibatch before its update.
    pub loss: f64,
    pub bce: f64,
    pub reg: f64,
    pub train_accuracy: f64,
    pub valid_accuracy: f64,
    /// Mean cross-entropy on the validation set; breaks validation-accuracy ties.
    pub valid_bce: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the epoch with the best validation accuracy
    /// (lowest validation cross-entropy among ties, then the earliest).
    pub params: ModelParams,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
}

/// Positive prediction iff the logit is nonnegative.
pub fn predicts_positive(logit: f64) -> bool {
    logit >= 0.0
}

/// Fraction of `(logit, label)` pairs whose sign agrees after binarization.
pub fn accuracy_from_logits(logits: &[f64], labels: &[f64]) -> f64 {
    if logits.is_empty() {
        return 0.0;
    }
    let hits = logits
        .iter()
        .zip(labels)
        .filter(|(&z, &y)| predicts_positive(z) == (y >= 0.0))
        .count();
    hits as f64 / logits.len() as f64
}

/// Binary accuracy of `p` on `data` as given.
pub fn evaluate(p: &ModelParams, data: &[MultimodalSequence]) -> Result<f64> {
    Ok(evaluate_detailed(p, data)?.0)
}

/// Accuracy and mean binary cross-entropy of `p` on `data`.
pub fn evaluate_detailed(p: &ModelParams, data: &[MultimodalSequence]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let logits = data
        .iter()
        .map(|s| predict_logit(p, s))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<f64> = data.iter().map(MultimodalSequence::label).collect();
    let bce = logits
        .iter()
        .zip(&labels)
        .map(|(&z, &y)| bce_with_logits(z, y >= 0.0))
        .sum::<f64>()
        / logits.len() as f64;
    Ok((accuracy_from_logits(&logits, &labels), bce))
}

/// Binary accuracy with evaluation-time noise (fixed per sequence for a given noise seed).
pub fn evaluate_noisy(p: &ModelParams, data: &[MultimodalSequence], noise: &NoiseSpec) -> Result<f64> {
    evaluate(p, &corrupt_for_eval(data, noise)?)
}

const TAG_SHUFFLE: u64 = 0x73687566;

/// Minibatch training. Training sequences are corrupted with fresh noise
/// every epoch; validation sequences with fixed evaluation noise.
pub fn train(
    p0: &ModelParams,
    train_set: &[MultimodalSequence],
    valid_set: &[MultimodalSequence],
    cfg: &TrainConfig,
    noise: &NoiseSpec,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    p0.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::invalid("training and validation sets must be nonempty"));
    }
    let valid = corrupt_for_eval(valid_set, noise)?;

    let mut params = p0.clone();
    let mut state = OptimizerState::new(cfg.optimizer, params.num_params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, f64, usize, ModelParams)> = None;

    for epoch in 0..cfg.epochs {
        let mut g = rng::stream(rng::derive_path(cfg.seed, &[TAG_SHUFFLE, epoch as u64]));
        order.shuffle(&mut g);

        let mut totals = LossParts::default();
        let mut hits = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let weight = 1.0 / chunk.len() as f64;
            let mut grad = params.zeros_like();
            let mut batch_loss = 0.0;
            for &i in chunk {
                let s = apply_noise(&train_set[i], &train_noise(noise, epoch, i))?;
                let (parts, logit) =
                    accumulate_example(&params, &s, cfg.reg_weight, weight, &mut grad)?;
                batch_loss += weight * parts.loss;
                totals.loss += parts.loss;
                totals.bce += parts.bce;
                totals.reg += parts.reg;
                if predicts_positive(logit) == s.is_positive() {
                    hits += 1;
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss {batch_loss} at epoch {epoch}, step {step}"
                )));
            }
            if let Some(max_norm) = cfg.grad_clip {
                clip_grad_norm(&mut grad, max_norm);
            }
            state.update(&mut params, &grad, cfg.learning_rate);
        }

        let n = train_set.len() as f64;
        let (valid_accuracy, valid_bce) = evaluate_detailed(&params, &valid)?;
        metrics.push(EpochMetrics {
            epoch,
            loss: totals.loss / n,
            bce: totals.bce / n,
            reg: totals.reg / n,
            train_accuracy: hits as f64 / n,
            valid_accuracy,
            valid_bce,
        });
        let improves = best.as_ref().map_or(true, |b| {
            valid_accuracy > b.0 || (valid_accuracy == b.0 && valid_bce < b.1)
        });
        if improves {
            best = Some((valid_accuracy, valid_bce, epoch, params.clone()));
        }
    }

    let (_, _, best_epoch, params) = best.expect("epochs >= 1");
    Ok(TrainOutcome {
        params,
        best_epoch,
        metrics,
    })
}
