use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::{Error, Result};

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Single-layer LSTM.
///
/// `weights` is `4H × (I + H)` acting on `[x_t; h_{t-1}]`; row blocks are the
/// input, forget, output and candidate gates in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Forward activations kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    /// `[x_t; h_{t-1}]` per step.
    concat: Vec<Vec<f64>>,
    /// Post-activation gates `[i, f, o, g]` per step.
    gates: Vec<Vec<f64>>,
    /// Cell states `c_0 … c_T` (with `c_0 = 0`).
    cells: Vec<Vec<f64>>,
    hidden: Matrix,
}

impl LstmTrace {
    /// `T × H` hidden states.
    pub fn hidden(&self) -> &Matrix {
        &self.hidden
    }

    pub fn last_hidden(&self) -> &[f64] {
        self.hidden.row(self.hidden.rows() - 1)
    }
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            weights: Matrix::zeros(4 * hidden_dim, input_dim + hidden_dim),
            bias: vec![0.0; 4 * hidden_dim],
        }
    }

    /// Uniform `±1/√H` initialization.
    pub fn random(input_dim: usize, hidden_dim: usize, g: &mut Rng) -> Self {
        Self::random_with_gain(input_dim, hidden_dim, 1.0, g)
    }

    /// Weights uniform in `±gain/√H`, biases uniform in `±1/√H`. Gains above 1
    /// give encoders whose hidden states sit closer to saturation.
    pub fn random_with_gain(input_dim: usize, hidden_dim: usize, gain: f64, g: &mut Rng) -> Self {
        let bound = 1.0 / libm::sqrt(hidden_dim as f64);
        let mut p = Self::zeros(input_dim, hidden_dim);
        for v in p.weights.data_mut() {
            *v = gain * g.random_range(-bound..bound);
        }
        for v in &mut p.bias {
            *v = g.random_range(-bound..bound);
        }
        p
    }

    pub fn num_params(&self) -> usize {
        self.weights.data().len() + self.bias.len()
    }

    pub fn forward(&self, x: &Matrix) -> Result<LstmTrace> {
        if x.cols() != self.input_dim {
            return Err(Error::invalid(format!(
                "LSTM expects {} input features, got {}",
                self.input_dim,
                x.cols()
            )));
        }
        let h = self.hidden_dim;
        let steps = x.rows();
        let mut concat = Vec::with_capacity(steps);
        let mut gates = Vec::with_capacity(steps);
        let mut cells = Vec::with_capacity(steps + 1);
        let mut hidden = Matrix::zeros(steps, h);
        cells.push(vec![0.0; h]);
        let mut h_prev = vec![0.0; h];
        for t in 0..steps {
            let mut z = Vec::with_capacity(self.input_dim + h);
            z.extend_from_slice(x.row(t));
            z.extend_from_slice(&h_prev);
            let mut a = self.bias.clone();
            for (r, out) in a.iter_mut().enumerate() {
                *out += self.weights.row(r).iter().zip(&z).map(|(w, v)| w * v).sum::<f64>();
            }
            for (k, v) in a.iter_mut().enumerate() {
                *v = if k < 3 * h { sigmoid(*v) } else { libm::tanh(*v) };
            }
            let c_prev = &cells[t];
            let mut c = vec![0.0; h];
            for j in 0..h {
                c[j] = a[h + j] * c_prev[j] + a[j] * a[3 * h + j];
                h_prev[j] = a[2 * h + j] * libm::tanh(c[j]);
            }
            hidden.row_mut(t).copy_from_slice(&h_prev);
            concat.push(z);
            gates.push(a);
            cells.push(c);
        }
        Ok(LstmTrace {
            concat,
            gates,
            cells,
            hidden,
        })
    }

    /// Accumulates into `grad` the parameter gradient given `dh`, the loss
    /// gradient with respect to each hidden state (`T × H`).
    pub fn backward(&self, trace: &LstmTrace, dh: &Matrix, grad: &mut LstmParams) {
        let h = self.hidden_dim;
        let inp = self.input_dim;
        let steps = trace.gates.len();
        debug_assert_eq!(dh.shape(), (steps, h));
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut da = vec![0.0; 4 * h];
        for t in (0..steps).rev() {
            let gate = &trace.gates[t];
            let c = &trace.cells[t + 1];
            let c_prev = &trace.cells[t];
            for j in 0..h {
                let (i, f, o, g) = (gate[j], gate[h + j], gate[2 * h + j], gate[3 * h + j]);
                let dh_t = dh.get(t, j) + dh_next[j];
                let tc = libm::tanh(c[j]);
                let d_o = dh_t * tc;
                let dc = dh_t * o * (1.0 - tc * tc) + dc_next[j];
                let d_i = dc * g;
                let d_g = dc * i;
                let d_f = dc * c_prev[j];
                dc_next[j] = dc * f;
                da[j] = d_i * i * (1.0 - i);
                da[h + j] = d_f * f * (1.0 - f);
                da[2 * h + j] = d_o * o * (1.0 - o);
                da[3 * h + j] = d_g * (1.0 - g * g);
            }
            let z = &trace.concat[t];
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for (r, &d) in da.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grad.bias[r] += d;
                for (gw, zv) in grad.weights.row_mut(r).iter_mut().zip(z) {
                    *gw += d * zv;
                }
                let wrow = &self.weights.row(r)[inp..];
                for (dn, w) in dh_next.iter_mut().zip(wrow) {
                    *dn += d * w;
                }
            }
        }
    }
}

/// Hidden states `h_1 … h_T` with `h_0 = c_0 = 0`.
pub fn lstm_forward(p: &LstmParams, x: &Matrix) -> Result<Matrix> {
    Ok(p.forward(x)?.hidden)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_weights_zero_inputs() {
        let p = LstmParams::zeros(3, 4);
        let h = lstm_forward(&p, &Matrix::zeros(5, 3)).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_by_hand() {
        // scalar LSTM, input 1, hidden 1; weight columns act on [x, h_prev]
        let mut p = LstmParams::zeros(1, 1);
        let w = [0.5, 0.0, -0.3, 0.0, 0.8, 0.0, 1.2, 0.0];
        p.weights.data_mut().copy_from_slice(&w);
        p.bias.copy_from_slice(&[0.1, 0.2, -0.1, 0.05]);
        let x = 2.0f64;
        let i = 1.0 / (1.0 + (-(0.5 * x + 0.1)).exp());
        let o = 1.0 / (1.0 + (-(0.8 * x - 0.1)).exp());
        let g = (1.2 * x + 0.05).tanh();
        let c = i * g; // c_0 = 0, so the forget gate does not contribute
        let expected = o * c.tanh();
        let h = lstm_forward(&p, &Matrix::from_rows(&[[x]]).unwrap()).unwrap();
        assert!((h.get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn outputs_bounded() {
        let mut g = rng::stream(3);
        let mut p = LstmParams::random(2, 3, &mut g);
        p.weights.scale(40.0);
        let x = Matrix::from_fn(6, 2, |t, j| (t as f64 - 2.0) * (j as f64 + 1.0) * 10.0);
        let h = lstm_forward(&p, &x).unwrap();
        assert!(h.data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn input_dim_checked() {
        let p = LstmParams::zeros(3, 2);
        assert!(lstm_forward(&p, &Matrix::zeros(2, 4)).is_err());
    }
}
