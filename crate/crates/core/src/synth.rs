//! Multimodal sequences and a synthetic generator with latent low-rank structure.
//!
//! Each sequence is driven by a smooth latent trajectory `z^t ∈ ℝ^k` (a
//! mean-reverting Gaussian random walk). Every modality observes the
//! trajectory through its own fixed linear map plus a little Gaussian noise,
//! so the clean features of one sequence have rank at most `k` per modality
//! and are strongly correlated across time and across modalities. The label
//! is `3·tanh(⟨w, mean_t z^t⟩)` for a fixed unit direction `w`, rejected and
//! redrawn while `|label| < label_margin`.

use alloc::format;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::matrix::Matrix;
use crate::rng;
use crate::{Error, Result};

pub const LABEL_RANGE: f64 = 3.0;

/// Autoregressive coefficient of the latent walk.
const LATENT_PERSISTENCE: f64 = 0.9;

/// Redraw budget per sequence before generation gives up.
const MAX_LABEL_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Language,
    Visual,
    Acoustic,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Language, Modality::Visual, Modality::Acoustic];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Boolean record of which feature entries were dropped (`true` = dropped).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropMask {
    rows: usize,
    cols: usize,
    dropped: Vec<bool>,
}

impl DropMask {
    pub fn new(rows: usize, cols: usize, dropped: Vec<bool>) -> Self {
        assert_eq!(dropped.len(), rows * cols);
        Self { rows, cols, dropped }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_dropped(&self, t: usize, j: usize) -> bool {
        self.dropped[t * self.cols + j]
    }

    pub fn row(&self, t: usize) -> &[bool] {
        &self.dropped[t * self.cols..(t + 1) * self.cols]
    }

    pub fn count(&self) -> usize {
        self.dropped.iter().filter(|&&d| d).count()
    }
}

/// Aligned language / visual / acoustic feature series with a sentiment label.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalSequence {
    features: [Matrix; 3],
    label: f64,
    masks: Option<[DropMask; 3]>,
}

impl MultimodalSequence {
    /// `features` are `T × D_m` matrices in language, visual, acoustic order.
    pub fn new(features: [Matrix; 3], label: f64) -> Result<Self> {
        let steps = features[0].rows();
        if steps == 0 {
            return Err(Error::invalid("sequence has no time steps"));
        }
        for (m, f) in features.iter().enumerate() {
            if f.rows() != steps {
                return Err(Error::invalid(format!(
                    "modality {m} has {} steps, language has {steps}",
                    f.rows()
                )));
            }
            if f.cols() == 0 {
                return Err(Error::invalid(format!("modality {m} has no features")));
            }
            if !f.is_finite() {
                return Err(Error::invalid(format!("modality {m} has non-finite features")));
            }
        }
        if !(label.abs() <= LABEL_RANGE) {
            return Err(Error::invalid(format!("label {label} outside [-3, 3]")));
        }
        Ok(Self {
            features,
            label,
            masks: None,
        })
    }

    pub fn steps(&self) -> usize {
        self.features[0].rows()
    }

    pub fn dims(&self) -> [usize; 3] {
        core::array::from_fn(|m| self.features[m].cols())
    }

    pub fn features(&self) -> &[Matrix; 3] {
        &self.features
    }

    pub fn modality(&self, m: Modality) -> &Matrix {
        &self.features[m.index()]
    }

    pub fn lang(&self) -> &Matrix {
        &self.features[0]
    }

    pub fn visual(&self) -> &Matrix {
        &self.features[1]
    }

    pub fn acoustic(&self) -> &Matrix {
        &self.features[2]
    }

    pub fn label(&self) -> f64 {
        self.label
    }

    /// Binary target: nonnegative labels are the positive class.
    pub fn is_positive(&self) -> bool {
        self.label >= 0.0
    }

    pub fn masks(&self) -> Option<&[DropMask; 3]> {
        self.masks.as_ref()
    }

    pub(crate) fn with_features(&self, features: [Matrix; 3], masks: Option<[DropMask; 3]>) -> Self {
        Self {
            features,
            label: self.label,
            masks,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<MultimodalSequence>,
    pub valid: Vec<MultimodalSequence>,
    pub test: Vec<MultimodalSequence>,
}

impl DatasetSplit {
    pub fn validate(&self) -> Result<()> {
        for (name, part) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            if part.is_empty() {
                return Err(Error::invalid(format!("{name} split is empty")));
            }
        }
        let dims = self.train[0].dims();
        let all = self.train.iter().chain(&self.valid).chain(&self.test);
        if let Some(s) = all.into_iter().find(|s| s.dims() != dims) {
            return Err(Error::invalid(format!(
                "feature dims {:?} differ from {:?}",
                s.dims(),
                dims
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.train.first().map_or([0; 3], MultimodalSequence::dims)
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub steps: usize,
    pub dims: [usize; 3],
    pub latent_rank: usize,
    /// Minimum `|label|` on the `[-3, 3]` scale.
    pub label_margin: f64,
    /// Standard deviation of the per-entry observation noise.
    pub obs_noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_train: 300,
            n_valid: 50,
            n_test: 100,
            steps: 20,
            dims: [8, 8, 8],
            latent_rank: 3,
            label_margin: 0.5,
            obs_noise: 0.01,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_valid == 0 || self.n_test == 0 {
            return Err(Error::invalid("every split needs at least one sequence"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps must be positive"));
        }
        if self.dims.contains(&0) {
            return Err(Error::invalid("feature dims must be positive"));
        }
        let min_dim = *self.dims.iter().min().expect("three dims");
        if self.latent_rank == 0 || self.latent_rank > min_dim {
            return Err(Error::invalid(format!(
                "latent_rank must satisfy 1 <= k <= min(D_l, D_v, D_a) = {min_dim}, got k = {}",
                self.latent_rank
            )));
        }
        if !(self.label_margin > 0.0) {
            return Err(Error::invalid("label_margin must be positive"));
        }
        if !(self.obs_noise >= 0.0) || !self.obs_noise.is_finite() {
            return Err(Error::invalid("obs_noise must be finite and nonnegative"));
        }
        Ok(())
    }
}

const TAG_MAPS: u64 = 1;
const TAG_SEQUENCE: u64 = 2;

fn gaussian_matrix(rows: usize, cols: usize, scale: f64, g: &mut rng::Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(g);
        scale * z
    })
}

/// Draws train / valid / test splits from one shared latent model.
pub fn generate(spec: &SynthSpec) -> Result<DatasetSplit> {
    spec.validate()?;
    let k = spec.latent_rank;
    let mut g = rng::stream(rng::derive_seed(spec.seed, TAG_MAPS));
    let emit_scale = 1.0 / libm::sqrt(k as f64);
    let maps: [Matrix; 3] = core::array::from_fn(|m| gaussian_matrix(spec.dims[m], k, emit_scale, &mut g));
    let mut direction: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut g)).collect();
    let n = libm::sqrt(direction.iter().map(|v| v * v).sum::<f64>());
    direction.iter_mut().for_each(|v| *v /= n);

    let mut counter = 0u64;
    let mut part = |count: usize| -> Result<Vec<MultimodalSequence>> {
        (0..count)
            .map(|i| {
                let seed = rng::derive_path(spec.seed, &[TAG_SEQUENCE, counter]);
                counter += 1;
                sample_sequence(spec, &maps, &direction, i % 2 == 0, seed)
            })
            .collect()
    };
    let train = part(spec.n_train)?;
    let valid = part(spec.n_valid)?;
    let test = part(spec.n_test)?;
    Ok(DatasetSplit { train, valid, test })
}

fn sample_sequence(
    spec: &SynthSpec,
    maps: &[Matrix; 3],
    direction: &[f64],
    positive: bool,
    seed: u64,
) -> Result<MultimodalSequence> {
    let k = spec.latent_rank;
    let mut g = rng::stream(seed);
    let innovation = libm::sqrt(1.0 - LATENT_PERSISTENCE * LATENT_PERSISTENCE);
    for _ in 0..MAX_LABEL_ATTEMPTS {
        let mut latent = Matrix::zeros(spec.steps, k);
        for j in 0..k {
            latent.set(0, j, StandardNormal.sample(&mut g));
        }
        for t in 1..spec.steps {
            for j in 0..k {
                let e: f64 = StandardNormal.sample(&mut g);
                latent.set(t, j, LATENT_PERSISTENCE * latent.get(t - 1, j) + innovation * e);
            }
        }
        let score: f64 = (0..k)
            .map(|j| direction[j] * (0..spec.steps).map(|t| latent.get(t, j)).sum::<f64>())
            .sum::<f64>()
            / spec.steps as f64;
        let mut label = LABEL_RANGE * libm::tanh(score);
        if label.abs() < spec.label_margin {
            continue;
        }
        // Flipping the whole trajectory flips the label and keeps classes balanced.
        if (label >= 0.0) != positive {
            latent.scale(-1.0);
            label = -label;
        }
        let features = core::array::from_fn(|m| {
            let mut x = latent.matmul(&maps[m].transpose()).expect("latent dims agree");
            if spec.obs_noise > 0.0 {
                for v in x.data_mut() {
                    let e: f64 = StandardNormal.sample(&mut g);
                    *v += spec.obs_noise * e;
                }
            }
            x
        });
        return MultimodalSequence::new(features, label);
    }
    Err(Error::Infeasible(format!(
        "no latent draw reached |label| >= {} in {MAX_LABEL_ATTEMPTS} attempts",
        spec.label_margin
    )))
}

/// Same shape and label as `s`, with every feature replaced by i.i.d. `N(0, 1)` noise.
pub fn iid_gaussian_like(s: &MultimodalSequence, seed: u64) -> MultimodalSequence {
    let mut g = rng::stream(seed);
    let features = core::array::from_fn(|m| {
        let f = &s.features()[m];
        gaussian_matrix(f.rows(), f.cols(), 1.0, &mut g)
    });
    s.with_features(features, None)
}
