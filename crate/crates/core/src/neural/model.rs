use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng as _;

use super::lstm::{LstmParams, LstmTrace};
use crate::matrix::Matrix;
use crate::rankreg::{bound_scale, fused_frobenius_sq};
use crate::rng;
use crate::synth::MultimodalSequence;
use crate::tensor::{reconstruct, CpFactors, DenseTensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Temporal tensor fusion: `Σ_t [h_ℓ^t;1] ⊗ [h_v^t;1] ⊗ [h_a^t;1]`.
    T2fn,
    /// Tensor fusion of the final hidden states only (rank one).
    Tfn,
    /// Features concatenated per step, one encoder.
    EfLstm,
    /// One encoder per modality, final states concatenated.
    LfLstm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::T2fn, Variant::Tfn, Variant::EfLstm, Variant::LfLstm];

    pub fn name(self) -> &'static str {
        match self {
            Variant::T2fn => "t2fn",
            Variant::Tfn => "tfn",
            Variant::EfLstm => "ef-lstm",
            Variant::LfLstm => "lf-lstm",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "t2fn" => Ok(Variant::T2fn),
            "tfn" => Ok(Variant::Tfn),
            "ef-lstm" | "ef" => Ok(Variant::EfLstm),
            "lf-lstm" | "lf" => Ok(Variant::LfLstm),
            other => Err(Error::invalid(format!(
                "unknown variant {other:?} (expected t2fn, tfn, ef-lstm or lf-lstm)"
            ))),
        }
    }
}

/// Input feature dims and encoder hidden dims, in language, visual, acoustic order.
/// The early-fusion encoder uses `hidden[0]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub inputs: [usize; 3],
    pub hidden: [usize; 3],
}

impl ModelDims {
    pub fn new(inputs: [usize; 3], hidden: [usize; 3]) -> Result<Self> {
        if inputs.contains(&0) || hidden.contains(&0) {
            return Err(Error::invalid("model dims must be positive"));
        }
        Ok(Self { inputs, hidden })
    }

    /// Shape of the fused tensor, `(d_ℓ+1, d_v+1, d_a+1)`.
    pub fn fused_shape(&self) -> [usize; 3] {
        self.hidden.map(|h| h + 1)
    }

    /// Squared nuclear-norm bound scale of the fused tensor, `Π(d+1) / max(d+1)`.
    pub fn reg_scale_sq(&self) -> f64 {
        let s = bound_scale(&self.fused_shape()).expect("order 3, positive dims");
        s * s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Classifier {
    pub fn apply(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Encoders and classifier of one model variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub variant: Variant,
    pub dims: ModelDims,
    /// Three per-modality encoders, or one for [`Variant::EfLstm`].
    pub encoders: Vec<LstmParams>,
    pub classifier: Classifier,
}

/// Size of the representation the classifier reads.
pub fn classifier_input_dim(variant: Variant, dims: &ModelDims) -> usize {
    match variant {
        Variant::T2fn | Variant::Tfn => dims.fused_shape().iter().product(),
        Variant::LfLstm => dims.hidden.iter().sum(),
        Variant::EfLstm => dims.hidden[0],
    }
}

impl ModelParams {
    pub fn zeros(variant: Variant, dims: ModelDims) -> Self {
        let encoders = match variant {
            Variant::EfLstm => vec![LstmParams::zeros(dims.inputs.iter().sum(), dims.hidden[0])],
            _ => (0..3)
                .map(|m| LstmParams::zeros(dims.inputs[m], dims.hidden[m]))
                .collect(),
        };
        Self {
            variant,
            dims,
            encoders,
            classifier: Classifier {
                weights: vec![0.0; classifier_input_dim(variant, &dims)],
                bias: 0.0,
            },
        }
    }

    /// Random initialization; encoder `m` draws from its own seeded stream,
    /// so variants sharing `seed` share per-modality encoders.
    pub fn init(variant: Variant, dims: ModelDims, seed: u64) -> Self {
        Self::init_with_gain(variant, dims, seed, 1.0)
    }

    /// [`ModelParams::init`] with encoder weight ranges multiplied by `gain`.
    pub fn init_with_gain(variant: Variant, dims: ModelDims, seed: u64, gain: f64) -> Self {
        let mut p = Self::zeros(variant, dims);
        for (m, enc) in p.encoders.iter_mut().enumerate() {
            let mut g = rng::stream(rng::derive_path(seed, &[0x656e63, m as u64]));
            *enc = LstmParams::random_with_gain(enc.input_dim, enc.hidden_dim, gain, &mut g);
        }
        let mut g = rng::stream(rng::derive_seed(seed, 0x636c66));
        let bound = 1.0 / libm::sqrt(p.classifier.weights.len() as f64);
        for w in &mut p.classifier.weights {
            *w = g.random_range(-bound..bound);
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.variant, self.dims)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = Self::zeros(self.variant, self.dims);
        if self.encoders.len() != expected.encoders.len() {
            return Err(Error::invalid("encoder count does not match variant"));
        }
        for (a, b) in self.encoders.iter().zip(&expected.encoders) {
            if a.input_dim != b.input_dim
                || a.hidden_dim != b.hidden_dim
                || a.weights.shape() != b.weights.shape()
                || a.bias.len() != b.bias.len()
            {
                return Err(Error::invalid("encoder shape does not match dims"));
            }
        }
        if self.classifier.weights.len() != expected.classifier.weights.len() {
            return Err(Error::invalid(format!(
                "classifier reads {} features, variant {} needs {}",
                self.classifier.weights.len(),
                self.variant,
                expected.classifier.weights.len()
            )));
        }
        if self.slices().iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("non-finite parameter"));
        }
        Ok(())
    }

    /// Parameter blocks in canonical order: per encoder weights then bias,
    /// then classifier weights, then classifier bias.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(2 * self.encoders.len() + 2);
        for e in &self.encoders {
            out.push(e.weights.data());
            out.push(&e.bias);
        }
        out.push(&self.classifier.weights);
        out.push(core::slice::from_ref(&self.classifier.bias));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * self.encoders.len() + 2);
        for e in &mut self.encoders {
            out.push(e.weights.data_mut());
            out.push(&mut e.bias);
        }
        out.push(&mut self.classifier.weights);
        out.push(core::slice::from_mut(&mut self.classifier.bias));
        out
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        Ok(())
    }

    fn check_input(&self, s: &MultimodalSequence) -> Result<()> {
        if s.dims() != self.dims.inputs {
            return Err(Error::invalid(format!(
                "model expects feature dims {:?}, sequence has {:?}",
                self.dims.inputs,
                s.dims()
            )));
        }
        Ok(())
    }

    /// Per-modality hidden sequences (`T × d_m`). Not available for early fusion.
    pub fn encode(&self, s: &MultimodalSequence) -> Result<[Matrix; 3]> {
        if self.variant == Variant::EfLstm {
            return Err(Error::invalid("early fusion has no per-modality encoders"));
        }
        self.check_input(s)?;
        let traces = self.encode_traces(s)?;
        Ok(traces.map(|t| t.hidden().clone()))
    }

    fn encode_traces(&self, s: &MultimodalSequence) -> Result<[LstmTrace; 3]> {
        let mut traces = Vec::with_capacity(3);
        for (enc, x) in self.encoders.iter().zip(s.features()) {
            traces.push(enc.forward(x)?);
        }
        Ok(traces.try_into().map_err(|_| Error::invalid("three encoders"))?)
    }
}

fn append_one(h: &Matrix) -> Matrix {
    let (rows, cols) = h.shape();
    Matrix::from_fn(rows, cols + 1, |t, j| if j < cols { h.get(t, j) } else { 1.0 })
}

/// `Σ_t a_t ⊗ b_t ⊗ c_t` held as its three `T × (d+1)` factor matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedTensor {
    factors: [Matrix; 3],
}

impl FusedTensor {
    /// Builds the fused tensor of hidden sequences, appending the constant 1 to every row.
    pub fn from_hidden(hidden: &[Matrix; 3]) -> Result<Self> {
        let steps = hidden[0].rows();
        if steps == 0 {
            return Err(Error::invalid("fused tensor needs at least one time step"));
        }
        if hidden.iter().any(|h| h.rows() != steps) {
            return Err(Error::invalid("hidden sequences differ in length"));
        }
        Ok(Self {
            factors: core::array::from_fn(|m| append_one(&hidden[m])),
        })
    }

    /// Rows `[h_m^t; 1]` per modality.
    pub fn factors(&self) -> &[Matrix; 3] {
        &self.factors
    }

    pub fn steps(&self) -> usize {
        self.factors[0].rows()
    }

    pub fn shape(&self) -> [usize; 3] {
        self.factors.each_ref().map(Matrix::cols)
    }

    /// `‖ℳ‖_F²` without materializing ℳ.
    pub fn frobenius_sq(&self) -> f64 {
        let [a, b, c] = &self.factors;
        fused_frobenius_sq(a, b, c).expect("equal step counts")
    }

    /// The time-step sum as an explicit CP factor set of rank `T`.
    pub fn cp_factors(&self) -> CpFactors {
        CpFactors::from_factors(self.factors.iter().map(Matrix::transpose).collect())
            .expect("consistent factors")
    }

    pub fn materialize(&self) -> DenseTensor {
        reconstruct(&self.cp_factors())
    }

    /// `⟨W, ℳ⟩` for a row-major flattened weight tensor `W`.
    pub fn contract(&self, weights: &[f64]) -> f64 {
        let [n0, n1, n2] = self.shape();
        debug_assert_eq!(weights.len(), n0 * n1 * n2);
        let mut total = 0.0;
        for t in 0..self.steps() {
            let (a, b, c) = (self.factors[0].row(t), self.factors[1].row(t), self.factors[2].row(t));
            for (i, &ai) in a.iter().enumerate() {
                let mut acc_i = 0.0;
                for (j, &bj) in b.iter().enumerate() {
                    let w = &weights[(i * n1 + j) * n2..(i * n1 + j + 1) * n2];
                    acc_i += bj * w.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
                }
                total += ai * acc_i;
            }
        }
        total
    }
}

/// Fused tensor and logit of a temporal tensor fusion model.
pub fn t2fn_forward(p: &ModelParams, s: &MultimodalSequence) -> Result<(FusedTensor, f64)> {
    if p.variant != Variant::T2fn {
        return Err(Error::invalid(format!("t2fn_forward called on a {} model", p.variant)));
    }
    let fused = FusedTensor::from_hidden(&p.encode(s)?)?;
    let logit = fused.contract(&p.classifier.weights) + p.classifier.bias;
    Ok((fused, logit))
}

/// Rank-one fused tensor of the final hidden states, as used by TFN.
pub fn tfn_fused(p: &ModelParams, s: &MultimodalSequence) -> Result<FusedTensor> {
    let hidden = p.encode(s)?;
    let last = hidden.each_ref().map(|h| {
        Matrix::from_rows(&[h.row(h.rows() - 1)]).expect("single row")
    });
    FusedTensor::from_hidden(&last)
}

/// Logit of a baseline variant (TFN, EF-LSTM, LF-LSTM).
pub fn baseline_forward(p: &ModelParams, s: &MultimodalSequence) -> Result<f64> {
    match p.variant {
        Variant::T2fn => Err(Error::invalid("baseline_forward called on a t2fn model")),
        Variant::Tfn => {
            let fused = tfn_fused(p, s)?;
            Ok(fused.contract(&p.classifier.weights) + p.classifier.bias)
        }
        Variant::LfLstm => {
            let hidden = p.encode(s)?;
            let repr: Vec<f64> = hidden
                .iter()
                .flat_map(|h| h.row(h.rows() - 1).iter().copied())
                .collect();
            Ok(p.classifier.apply(&repr))
        }
        Variant::EfLstm => {
            p.check_input(s)?;
            let h = p.encoders[0].forward(&concat_features(s))?;
            Ok(p.classifier.apply(h.last_hidden()))
        }
    }
}

/// Per-step concatenation `[x_ℓ^t; x_v^t; x_a^t]`.
pub fn concat_features(s: &MultimodalSequence) -> Matrix {
    let dims = s.dims();
    let total: usize = dims.iter().sum();
    let mut out = Matrix::zeros(s.steps(), total);
    for t in 0..s.steps() {
        let row = out.row_mut(t);
        let mut off = 0;
        for (m, f) in s.features().iter().enumerate() {
            row[off..off + dims[m]].copy_from_slice(f.row(t));
            off += dims[m];
        }
    }
    out
}

/// Logit of any variant.
pub fn predict_logit(p: &ModelParams, s: &MultimodalSequence) -> Result<f64> {
    match p.variant {
        Variant::T2fn => Ok(t2fn_forward(p, s)?.1),
        _ => baseline_forward(p, s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> ModelDims {
        ModelDims::new([3, 2, 4], [2, 3, 2]).unwrap()
    }

    fn seq(steps: usize, seed: u64) -> MultimodalSequence {
        use rand_distr::{Distribution, StandardNormal};
        let mut g = rng::stream(seed);
        let f = [3, 2, 4].map(|d| Matrix::from_fn(steps, d, |_, _| StandardNormal.sample(&mut g)));
        MultimodalSequence::new(f, 1.0).unwrap()
    }

    #[test]
    fn classifier_sizes() {
        let d = dims();
        assert_eq!(ModelParams::zeros(Variant::T2fn, d).classifier.weights.len(), 3 * 4 * 3);
        assert_eq!(ModelParams::zeros(Variant::Tfn, d).classifier.weights.len(), 36);
        assert_eq!(ModelParams::zeros(Variant::LfLstm, d).classifier.weights.len(), 7);
        assert_eq!(ModelParams::zeros(Variant::EfLstm, d).classifier.weights.len(), 2);
        assert_eq!(ModelParams::zeros(Variant::EfLstm, d).encoders[0].input_dim, 9);
    }

    #[test]
    fn unit_step_corner_entry() {
        let h = [Matrix::zeros(1, 2), Matrix::zeros(1, 3), Matrix::zeros(1, 2)];
        let f = FusedTensor::from_hidden(&h).unwrap();
        let m = f.materialize();
        assert_eq!(m.get(&[2, 3, 2]), 1.0);
        assert_eq!(m.frobenius_norm(), 1.0);
    }

    #[test]
    fn contraction_equals_materialized_inner_product() {
        let p = ModelParams::init(Variant::T2fn, dims(), 4);
        let s = seq(5, 9);
        let (fused, logit) = t2fn_forward(&p, &s).unwrap();
        let m = fused.materialize();
        let direct: f64 = m.data().iter().zip(&p.classifier.weights).map(|(a, b)| a * b).sum();
        assert!((logit - direct - p.classifier.bias).abs() < 1e-12);
        assert!((fused.frobenius_sq() - m.frobenius_norm().powi(2)).abs() < 1e-10);
    }

    #[test]
    fn forward_is_reproducible() {
        let a = ModelParams::init(Variant::T2fn, dims(), 11);
        let b = ModelParams::init(Variant::T2fn, dims(), 11);
        let s = seq(4, 2);
        assert_eq!(t2fn_forward(&a, &s).unwrap().1.to_bits(), t2fn_forward(&b, &s).unwrap().1.to_bits());
    }

    #[test]
    fn early_fusion_zero_weights_returns_bias() {
        let mut p = ModelParams::zeros(Variant::EfLstm, dims());
        p.classifier.bias = 0.37;
        p.classifier.weights.iter_mut().for_each(|w| *w = 1.5);
        assert_eq!(baseline_forward(&p, &seq(3, 1)).unwrap(), 0.37);
    }

    #[test]
    fn late_fusion_reads_tfn_encoder_states() {
        let lf = ModelParams::init(Variant::LfLstm, dims(), 5);
        let tfn = ModelParams::init(Variant::Tfn, dims(), 5);
        let s = seq(1, 3);
        let fused = tfn_fused(&tfn, &s).unwrap();
        let hl = lf.encode(&s).unwrap();
        for m in 0..3 {
            let row = fused.factors()[m].row(0);
            assert_eq!(&row[..row.len() - 1], hl[m].row(0));
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = ModelParams::init(Variant::T2fn, ModelDims::new([1, 2, 4], [2, 3, 2]).unwrap(), 0);
        assert!(t2fn_forward(&p, &seq(2, 0)).is_err());
        let b = ModelParams::init(Variant::Tfn, dims(), 0);
        assert!(t2fn_forward(&b, &seq(2, 0)).is_err());
        assert!(baseline_forward(&ModelParams::init(Variant::T2fn, dims(), 0), &seq(2, 0)).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let p = ModelParams::init(Variant::LfLstm, dims(), 1);
        let mut q = p.zeros_like();
        q.assign_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(q.assign_flat(&[0.0]).is_err());
        p.validate().unwrap();
    }

    #[test]
    fn variant_names_parse() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("gru".parse::<Variant>().is_err());
    }
}
