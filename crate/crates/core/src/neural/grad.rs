//! Loss and exact reverse-mode gradients for every variant.

use alloc::format;
use alloc::vec::Vec;

use super::lstm::sigmoid;
use super::model::{concat_features, FusedTensor, ModelDims, ModelParams, Variant};
use super::train::TrainConfig;
use crate::matrix::Matrix;
use crate::rankreg::fused_frobenius_sq_with_grad;
use crate::synth::MultimodalSequence;
use crate::{Error, Result};

/// Binary cross-entropy on a logit, `log(1 + e^{-z})` for the positive class.
pub fn bce_with_logits(logit: f64, positive: bool) -> f64 {
    let y = if positive { 1.0 } else { 0.0 };
    logit.max(0.0) - logit * y + libm::log1p(libm::exp(-logit.abs()))
}

/// Prediction loss plus `lambda · reg_value`; the label is binarized at 0.
pub fn loss(logit: f64, label: f64, reg_value: f64, lambda: f64) -> f64 {
    bce_with_logits(logit, label >= 0.0) + lambda * reg_value
}

/// Squared bound scale times `‖ℳ‖_F²`: the penalty added (times λ) to the T2FN loss.
pub fn regularizer_value(dims: &ModelDims, fused: &FusedTensor) -> f64 {
    dims.reg_scale_sq() * fused.frobenius_sq()
}

/// Loss components of one example or averaged over a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub loss: f64,
    pub bce: f64,
    /// Regularizer value before weighting by λ (0 for baselines).
    pub reg: f64,
}

/// Adds `weight · ∂loss/∂θ` for example `s` into `grad`, returning the
/// unweighted loss parts and the logit.
pub fn accumulate_example(
    p: &ModelParams,
    s: &MultimodalSequence,
    lambda: f64,
    weight: f64,
    grad: &mut ModelParams,
) -> Result<(LossParts, f64)> {
    if s.dims() != p.dims.inputs {
        return Err(Error::invalid(format!(
            "model expects feature dims {:?}, sequence has {:?}",
            p.dims.inputs,
            s.dims()
        )));
    }
    let positive = s.is_positive();
    match p.variant {
        Variant::T2fn | Variant::Tfn => fusion_backward(p, s, lambda, weight, positive, grad),
        Variant::LfLstm => late_backward(p, s, weight, positive, grad),
        Variant::EfLstm => early_backward(p, s, weight, positive, grad),
    }
}

fn output_delta(logit: f64, positive: bool) -> f64 {
    sigmoid(logit) - if positive { 1.0 } else { 0.0 }
}

fn fusion_backward(
    p: &ModelParams,
    s: &MultimodalSequence,
    lambda: f64,
    weight: f64,
    positive: bool,
    grad: &mut ModelParams,
) -> Result<(LossParts, f64)> {
    let traces: Vec<_> = p
        .encoders
        .iter()
        .zip(s.features())
        .map(|(e, x)| e.forward(x))
        .collect::<Result<_>>()?;
    let steps = s.steps();
    let temporal = p.variant == Variant::T2fn;
    // TFN fuses only the final step.
    let first = if temporal { 0 } else { steps - 1 };
    let hidden: [Matrix; 3] = core::array::from_fn(|m| {
        let h = traces[m].hidden();
        Matrix::from_fn(steps - first, h.cols(), |t, j| h.get(first + t, j))
    });
    let fused = FusedTensor::from_hidden(&hidden)?;
    let w = &p.classifier.weights;
    let logit = fused.contract(w) + p.classifier.bias;
    let reg = if temporal {
        p.dims.reg_scale_sq() * fused.frobenius_sq()
    } else {
        0.0
    };
    let bce = bce_with_logits(logit, positive);
    let parts = LossParts {
        loss: bce + lambda * reg,
        bce,
        reg,
    };

    let dlogit = weight * output_delta(logit, positive);
    let [n0, n1, n2] = fused.shape();
    let f = fused.factors();
    let mut dfac: [Matrix; 3] = f.each_ref().map(|m| Matrix::zeros(m.rows(), m.cols()));
    let mut u = alloc::vec![0.0; n0 * n1];
    for t in 0..fused.steps() {
        let (a, b, c) = (f[0].row(t), f[1].row(t), f[2].row(t));
        for i in 0..n0 {
            for j in 0..n1 {
                let base = (i * n1 + j) * n2;
                let wk = &w[base..base + n2];
                u[i * n1 + j] = wk.iter().zip(c).map(|(x, y)| x * y).sum();
                let ab = a[i] * b[j];
                if ab != 0.0 {
                    let gw = &mut grad.classifier.weights[base..base + n2];
                    let dc = dfac[2].row_mut(t);
                    for k in 0..n2 {
                        gw[k] += dlogit * ab * c[k];
                        dc[k] += dlogit * ab * wk[k];
                    }
                }
            }
        }
        for i in 0..n0 {
            let ui = &u[i * n1..(i + 1) * n1];
            dfac[0].row_mut(t)[i] += dlogit * ui.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let db = dfac[1].row_mut(t);
            for j in 0..n1 {
                db[j] += dlogit * a[i] * ui[j];
            }
        }
    }
    grad.classifier.bias += dlogit;

    if temporal && lambda != 0.0 {
        let coef = weight * lambda * p.dims.reg_scale_sq();
        let (_, rg) = fused_frobenius_sq_with_grad(&f[0], &f[1], &f[2])?;
        for (d, g) in dfac.iter_mut().zip(&rg) {
            for (x, y) in d.data_mut().iter_mut().zip(g.data()) {
                *x += coef * y;
            }
        }
    }

    for m in 0..3 {
        let hdim = p.dims.hidden[m];
        let mut dh = Matrix::zeros(steps, hdim);
        for t in 0..dfac[m].rows() {
            dh.row_mut(first + t).copy_from_slice(&dfac[m].row(t)[..hdim]);
        }
        p.encoders[m].backward(&traces[m], &dh, &mut grad.encoders[m]);
    }
    Ok((parts, logit))
}

fn late_backward(
    p: &ModelParams,
    s: &MultimodalSequence,
    weight: f64,
    positive: bool,
    grad: &mut ModelParams,
) -> Result<(LossParts, f64)> {
    let traces: Vec<_> = p
        .encoders
        .iter()
        .zip(s.features())
        .map(|(e, x)| e.forward(x))
        .collect::<Result<_>>()?;
    let repr: Vec<f64> = traces.iter().flat_map(|t| t.last_hidden().iter().copied()).collect();
    let logit = p.classifier.apply(&repr);
    let bce = bce_with_logits(logit, positive);
    let dlogit = weight * output_delta(logit, positive);
    for (g, r) in grad.classifier.weights.iter_mut().zip(&repr) {
        *g += dlogit * r;
    }
    grad.classifier.bias += dlogit;
    let steps = s.steps();
    let mut offset = 0;
    for m in 0..3 {
        let hdim = p.dims.hidden[m];
        let mut dh = Matrix::zeros(steps, hdim);
        for j in 0..hdim {
            dh.set(steps - 1, j, dlogit * p.classifier.weights[offset + j]);
        }
        offset += hdim;
        p.encoders[m].backward(&traces[m], &dh, &mut grad.encoders[m]);
    }
    Ok((LossParts { loss: bce, bce, reg: 0.0 }, logit))
}

fn early_backward(
    p: &ModelParams,
    s: &MultimodalSequence,
    weight: f64,
    positive: bool,
    grad: &mut ModelParams,
) -> Result<(LossParts, f64)> {
    let enc = &p.encoders[0];
    let trace = enc.forward(&concat_features(s))?;
    let logit = p.classifier.apply(trace.last_hidden());
    let bce = bce_with_logits(logit, positive);
    let dlogit = weight * output_delta(logit, positive);
    for (g, r) in grad.classifier.weights.iter_mut().zip(trace.last_hidden()) {
        *g += dlogit * r;
    }
    grad.classifier.bias += dlogit;
    let steps = s.steps();
    let mut dh = Matrix::zeros(steps, enc.hidden_dim);
    for j in 0..enc.hidden_dim {
        dh.set(steps - 1, j, dlogit * p.classifier.weights[j]);
    }
    enc.backward(&trace, &dh, &mut grad.encoders[0]);
    Ok((LossParts { loss: bce, bce, reg: 0.0 }, logit))
}

/// Gradient of the mean loss over `batch` (regularizer weighted by `cfg.reg_weight`),
/// together with the mean loss parts.
pub fn gradients(
    p: &ModelParams,
    batch: &[MultimodalSequence],
    cfg: &TrainConfig,
) -> Result<(ModelParams, LossParts)> {
    if batch.is_empty() {
        return Err(Error::invalid("gradient of an empty batch"));
    }
    let mut grad = p.zeros_like();
    let weight = 1.0 / batch.len() as f64;
    let mut mean = LossParts::default();
    for s in batch {
        let (parts, _) = accumulate_example(p, s, cfg.reg_weight, weight, &mut grad)?;
        mean.loss += weight * parts.loss;
        mean.bce += weight * parts.bce;
        mean.reg += weight * parts.reg;
    }
    if !mean.loss.is_finite() {
        return Err(Error::Diverged(format!("non-finite batch loss {}", mean.loss)));
    }
    Ok((grad, mean))
}

/// Mean loss over `batch` by forward passes only.
pub fn batch_loss(p: &ModelParams, batch: &[MultimodalSequence], lambda: f64) -> Result<f64> {
    let mut total = 0.0;
    for s in batch {
        let (logit, reg) = match p.variant {
            Variant::T2fn => {
                let (fused, logit) = super::model::t2fn_forward(p, s)?;
                (logit, regularizer_value(&p.dims, &fused))
            }
            _ => (super::model::baseline_forward(p, s)?, 0.0),
        };
        total += loss(logit, s.label(), reg, lambda);
    }
    Ok(total / batch.len() as f64)
}
