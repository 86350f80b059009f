//! Imperfection models: independent entry drops and whole time-step drops.
//!
//! Dropped entries are set to zero; sequence length is unchanged and the
//! model never sees the mask.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng as _;

use crate::matrix::Matrix;
use crate::rng;
use crate::synth::{DropMask, MultimodalSequence};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoiseKind {
    Clean,
    /// Every scalar entry is dropped independently with probability p.
    RandomDrop,
    /// Independently per modality, every time step is dropped whole with probability p.
    StructuredDrop,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::Clean, NoiseKind::RandomDrop, NoiseKind::StructuredDrop];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Clean => "clean",
            NoiseKind::RandomDrop => "random_drop",
            NoiseKind::StructuredDrop => "structured_drop",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(NoiseKind::Clean),
            "random_drop" | "random" => Ok(NoiseKind::RandomDrop),
            "structured_drop" | "structured" => Ok(NoiseKind::StructuredDrop),
            other => Err(Error::invalid(format!(
                "unknown noise kind {other:?} (expected clean, random_drop or structured_drop)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub p: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn clean() -> Self {
        Self {
            kind: NoiseKind::Clean,
            p: 0.0,
            seed: 0,
        }
    }

    pub fn new(kind: NoiseKind, p: f64, seed: u64) -> Result<Self> {
        let spec = Self { kind, p, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::invalid(format!("noise probability {} outside [0, 1]", self.p)));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// The corrupted sequence, with the drop masks recorded for diagnostics.
pub fn apply_noise(s: &MultimodalSequence, n: &NoiseSpec) -> Result<MultimodalSequence> {
    n.validate()?;
    if n.kind == NoiseKind::Clean {
        return Ok(s.clone());
    }
    let mut g = rng::stream(n.seed);
    let mut masks = Vec::with_capacity(3);
    let features: [Matrix; 3] = core::array::from_fn(|m| {
        let mut f = s.features()[m].clone();
        let (rows, cols) = f.shape();
        let mut dropped = alloc::vec![false; rows * cols];
        match n.kind {
            NoiseKind::RandomDrop => {
                for (v, d) in f.data_mut().iter_mut().zip(dropped.iter_mut()) {
                    if g.random::<f64>() < n.p {
                        *v = 0.0;
                        *d = true;
                    }
                }
            }
            NoiseKind::StructuredDrop => {
                for t in 0..rows {
                    if g.random::<f64>() < n.p {
                        f.row_mut(t).iter_mut().for_each(|v| *v = 0.0);
                        dropped[t * cols..(t + 1) * cols].iter_mut().for_each(|d| *d = true);
                    }
                }
            }
            NoiseKind::Clean => unreachable!(),
        }
        masks.push(DropMask::new(rows, cols, dropped));
        f
    });
    let masks: [DropMask; 3] = masks.try_into().expect("three masks");
    Ok(s.with_features(features, Some(masks)))
}

const TAG_TRAIN: u64 = 0x7472_6169_6e;
const TAG_EVAL: u64 = 0x6576_616c;

/// Noise for training example `index` at `epoch`: resampled every epoch.
pub fn train_noise(n: &NoiseSpec, epoch: usize, index: usize) -> NoiseSpec {
    n.with_seed(rng::derive_path(n.seed, &[TAG_TRAIN, epoch as u64, index as u64]))
}

/// Noise for evaluation example `index`: fixed for a given spec seed.
pub fn eval_noise(n: &NoiseSpec, index: usize) -> NoiseSpec {
    n.with_seed(rng::derive_path(n.seed, &[TAG_EVAL, index as u64]))
}

/// Applies [`eval_noise`] to every sequence of `data`.
pub fn corrupt_for_eval(data: &[MultimodalSequence], n: &NoiseSpec) -> Result<Vec<MultimodalSequence>> {
    data.iter()
        .enumerate()
        .map(|(i, s)| apply_noise(s, &eval_noise(n, i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthSpec};

    fn sample() -> MultimodalSequence {
        let spec = SynthSpec {
            n_train: 1,
            n_valid: 1,
            n_test: 1,
            steps: 30,
            ..SynthSpec::default()
        };
        generate(&spec).unwrap().train.remove(0)
    }

    #[test]
    fn zero_probability_is_identity() {
        let s = sample();
        for kind in NoiseKind::ALL {
            let out = apply_noise(&s, &NoiseSpec::new(kind, 0.0, 3).unwrap()).unwrap();
            assert_eq!(out.features(), s.features());
            assert_eq!(out.label(), s.label());
        }
    }

    #[test]
    fn full_random_drop_zeroes_everything() {
        let s = sample();
        let out = apply_noise(&s, &NoiseSpec::new(NoiseKind::RandomDrop, 1.0, 3).unwrap()).unwrap();
        assert!(out.features().iter().all(|f| f.data().iter().all(|&v| v == 0.0)));
        assert_eq!(out.label(), s.label());
        let masks = out.masks().unwrap();
        assert_eq!(masks.iter().map(DropMask::count).sum::<usize>(), 30 * 24);
    }

    #[test]
    fn structured_drop_zeroes_whole_rows() {
        let s = sample();
        let out = apply_noise(&s, &NoiseSpec::new(NoiseKind::StructuredDrop, 0.5, 11).unwrap()).unwrap();
        let masks = out.masks().unwrap();
        for m in 0..3 {
            for t in 0..s.steps() {
                let row = masks[m].row(t);
                assert!(row.iter().all(|&d| d) || row.iter().all(|&d| !d));
                if row[0] {
                    assert!(out.features()[m].row(t).iter().all(|&v| v == 0.0));
                } else {
                    assert_eq!(out.features()[m].row(t), s.features()[m].row(t));
                }
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = sample();
        let n = NoiseSpec::new(NoiseKind::RandomDrop, 0.3, 5).unwrap();
        assert_eq!(apply_noise(&s, &n).unwrap(), apply_noise(&s, &n).unwrap());
        assert_ne!(
            apply_noise(&s, &n).unwrap(),
            apply_noise(&s, &n.with_seed(6)).unwrap()
        );
    }

    #[test]
    fn invalid_probability() {
        assert!(NoiseSpec::new(NoiseKind::RandomDrop, 1.5, 0).is_err());
        assert!(NoiseSpec::new(NoiseKind::RandomDrop, -0.1, 0).is_err());
    }

    #[test]
    fn kind_parsing() {
        for k in NoiseKind::ALL {
            assert_eq!(k.name().parse::<NoiseKind>().unwrap(), k);
        }
        assert!("gaussian".parse::<NoiseKind>().is_err());
    }

    #[test]
    fn train_and_eval_streams_differ() {
        let n = NoiseSpec::new(NoiseKind::RandomDrop, 0.5, 1).unwrap();
        assert_ne!(train_noise(&n, 0, 0).seed, train_noise(&n, 1, 0).seed);
        assert_ne!(train_noise(&n, 0, 0).seed, eval_noise(&n, 0).seed);
        assert_eq!(eval_noise(&n, 4).seed, eval_noise(&n, 4).seed);
    }
}
