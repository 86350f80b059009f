use alloc::vec;
use alloc::vec::Vec;

use super::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Scales `grad` so its global L2 norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_grad_norm(grad: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = libm::sqrt(
        grad.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|g| g * g)
            .sum::<f64>(),
    );
    if norm > max_norm {
        let c = max_norm / norm;
        for s in grad.slices_mut() {
            s.iter_mut().for_each(|g| *g *= c);
        }
    }
    norm
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: Optimizer,
    first: Vec<f64>,
    second: Vec<f64>,
    step: i32,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, num_params: usize) -> Self {
        Self {
            kind,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut ModelParams, grad: &ModelParams, lr: f64) {
        self.step += 1;
        let grads = grad.slices();
        let mut offset = 0;
        for (p, g) in params.slices_mut().into_iter().zip(grads) {
            match self.kind {
                Optimizer::Sgd => {
                    for (x, d) in p.iter_mut().zip(g) {
                        *x -= lr * d;
                    }
                }
                Optimizer::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - libm::pow(beta1, self.step as f64);
                    let c2 = 1.0 - libm::pow(beta2, self.step as f64);
                    for (k, (x, d)) in p.iter_mut().zip(g).enumerate() {
                        let m = &mut self.first[offset + k];
                        let v = &mut self.second[offset + k];
                        *m = beta1 * *m + (1.0 - beta1) * d;
                        *v = beta2 * *v + (1.0 - beta2) * d * d;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *x -= lr * m_hat / (libm::sqrt(v_hat) + eps);
                    }
                }
            }
            offset += g.len();
        }
    }
}
