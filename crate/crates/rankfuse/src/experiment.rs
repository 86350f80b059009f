//! Experiment grids: training under imperfection and CP-rank analysis of
//! fused tensors.
//!
//! Grid cells are independent and run in parallel; results always come back
//! in the canonical job order, so outputs do not depend on scheduling.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;

use rankfuse_core::cp::{rank_curve, surrogate_rank, AlsConfig, RankCurve};
use rankfuse_core::neural::{
    evaluate_noisy, train, EpochMetrics, FusedTensor, ModelDims, ModelParams, TrainConfig, Variant,
};
use rankfuse_core::noise::{apply_noise, eval_noise, NoiseKind, NoiseSpec};
use rankfuse_core::rng;
use rankfuse_core::synth::{iid_gaussian_like, DatasetSplit, MultimodalSequence};

use crate::csv_out::num;
use crate::error::RunError;

/// Seed tag separating test-set evaluation noise from validation noise.
pub const TAG_TEST_NOISE: u64 = 0x74657374;
const TAG_IID: u64 = 0x696964;
const TAG_SUBSET: u64 = 0x737562;
const TAG_ALS: u64 = 0x616c73;

/// A model variant as named in experiment grids; `t2fn-noreg` is T2FN
/// trained with λ = 0 whatever the λ grid says.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RunVariant {
    Model(Variant),
    T2fnNoReg,
}

impl RunVariant {
    pub fn name(self) -> &'static str {
        match self {
            RunVariant::Model(v) => v.name(),
            RunVariant::T2fnNoReg => "t2fn-noreg",
        }
    }

    pub fn model(self) -> Variant {
        match self {
            RunVariant::Model(v) => v,
            RunVariant::T2fnNoReg => Variant::T2fn,
        }
    }
}

impl fmt::Display for RunVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RunVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "t2fn-noreg" {
            return Ok(RunVariant::T2fnNoReg);
        }
        s.parse::<Variant>().map(RunVariant::Model).map_err(|_| {
            format!("unknown variant `{s}` (expected t2fn, t2fn-noreg, tfn, ef-lstm or lf-lstm)")
        })
    }
}

/// Noise levels actually run for `kind`: clean ignores the grid and runs once at p = 0.
pub fn levels_for(kind: NoiseKind, levels: &[f64]) -> Vec<f64> {
    match kind {
        NoiseKind::Clean => vec![0.0],
        _ => levels.to_vec(),
    }
}

/// The default noise grid `0.0, 0.1, …, 1.0`.
pub fn default_noise_levels() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainJob {
    pub variant: RunVariant,
    pub kind: NoiseKind,
    pub p: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl TrainJob {
    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec {
            kind: self.kind,
            p: self.p,
            seed: self.seed,
        }
    }

    /// Noise applied to the test split (fixed per sequence, distinct from validation noise).
    pub fn test_noise(&self) -> NoiseSpec {
        test_noise(self.kind, self.p, self.seed)
    }

    fn sort_key(&self) -> (&'static str, &'static str, f64, f64, u64) {
        (self.variant.name(), self.kind.name(), self.p, self.lambda, self.seed)
    }
}

/// Canonical row order: variant name, kind name, p, λ, seed.
pub fn job_order(a: &TrainJob, b: &TrainJob) -> Ordering {
    let (ka, kb) = (a.sort_key(), b.sort_key());
    ka.0.cmp(kb.0)
        .then(ka.1.cmp(kb.1))
        .then(ka.2.total_cmp(&kb.2))
        .then(ka.3.total_cmp(&kb.3))
        .then(ka.4.cmp(&kb.4))
}

pub fn test_noise(kind: NoiseKind, p: f64, seed: u64) -> NoiseSpec {
    NoiseSpec {
        kind,
        p,
        seed: rng::derive_seed(seed, TAG_TEST_NOISE),
    }
}

#[derive(Debug, Clone)]
pub struct TrainGrid {
    pub variants: Vec<RunVariant>,
    pub kinds: Vec<NoiseKind>,
    pub levels: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub hidden: [usize; 3],
    /// Encoder weight-range multiplier at initialization (1 = standard `±1/√H`).
    pub init_gain: f64,
    /// Template; `reg_weight` and `seed` are overridden per cell.
    pub train: TrainConfig,
}

impl TrainGrid {
    pub fn validate(&self) -> Result<(), RunError> {
        if self.variants.is_empty() || self.kinds.is_empty() || self.seeds.is_empty() {
            return Err(RunError::config("variants, noise kinds and seeds must be nonempty"));
        }
        if self.kinds.iter().any(|&k| k != NoiseKind::Clean) && self.levels.is_empty() {
            return Err(RunError::config("noise levels must be nonempty"));
        }
        if let Some(p) = self.levels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(RunError::config(format!("noise level {p} outside [0, 1]")));
        }
        if self.variants.contains(&RunVariant::Model(Variant::T2fn)) && self.lambdas.is_empty() {
            return Err(RunError::config("the λ grid must be nonempty when t2fn is requested"));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
            return Err(RunError::config(format!("λ = {l} must be finite and nonnegative")));
        }
        if self.hidden.contains(&0) {
            return Err(RunError::config("hidden dims must be positive"));
        }
        if !(self.init_gain > 0.0) || !self.init_gain.is_finite() {
            return Err(RunError::config("init gain must be positive"));
        }
        self.train.validate()?;
        Ok(())
    }

    /// Every grid cell, in canonical order.
    pub fn jobs(&self) -> Vec<TrainJob> {
        let mut jobs = Vec::new();
        for &variant in &self.variants {
            let lambdas = match variant {
                RunVariant::Model(Variant::T2fn) => self.lambdas.clone(),
                _ => vec![0.0],
            };
            for &kind in &self.kinds {
                for p in levels_for(kind, &self.levels) {
                    for &lambda in &lambdas {
                        for &seed in &self.seeds {
                            jobs.push(TrainJob {
                                variant,
                                kind,
                                p,
                                lambda,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        jobs.sort_by(job_order);
        jobs.dedup_by(|a, b| job_order(a, b) == Ordering::Equal);
        jobs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Ok,
    Diverged(String),
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Diverged(_) => "diverged",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub job: TrainJob,
    pub status: RunStatus,
    /// Test accuracy of the best-validation parameters (NaN after divergence).
    pub accuracy: f64,
    pub valid_accuracy: f64,
    pub valid_bce: f64,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
    pub params: Option<ModelParams>,
}

/// Trains one cell. Divergence is reported in the result, not as an error.
pub fn run_train_job(data: &DatasetSplit, grid: &TrainGrid, job: &TrainJob) -> Result<TrainResult, RunError> {
    let dims = ModelDims::new(data.dims(), grid.hidden)?;
    let p0 = ModelParams::init_with_gain(job.variant.model(), dims, job.seed, grid.init_gain);
    let cfg = TrainConfig {
        reg_weight: job.lambda,
        seed: job.seed,
        ..grid.train
    };
    let noise = job.noise();
    match train(&p0, &data.train, &data.valid, &cfg, &noise) {
        Ok(out) => {
            let best = out.metrics[out.best_epoch];
            let accuracy = evaluate_noisy(&out.params, &data.test, &job.test_noise())?;
            Ok(TrainResult {
                job: *job,
                status: RunStatus::Ok,
                accuracy,
                valid_accuracy: best.valid_accuracy,
                valid_bce: best.valid_bce,
                best_epoch: out.best_epoch,
                metrics: out.metrics,
                params: Some(out.params),
            })
        }
        Err(rankfuse_core::Error::Diverged(msg)) => Ok(TrainResult {
            job: *job,
            status: RunStatus::Diverged(msg),
            accuracy: f64::NAN,
            valid_accuracy: f64::NAN,
            valid_bce: f64::NAN,
            best_epoch: 0,
            metrics: Vec::new(),
            params: None,
        }),
        Err(e) => Err(e.into()),
    }
}

/// Runs every cell of `grid` (in parallel) and returns results in canonical order.
pub fn run_train_grid(data: &DatasetSplit, grid: &TrainGrid) -> Result<Vec<TrainResult>, RunError> {
    grid.validate()?;
    data.validate()?;
    let jobs = grid.jobs();
    jobs.par_iter().map(|j| run_train_job(data, grid, j)).collect()
}

/// The T2FN run with λ > 0 chosen on validation for one `(kind, p, seed)` cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub kind: NoiseKind,
    pub p: f64,
    pub seed: u64,
    pub lambda: f64,
    pub valid_accuracy: f64,
    pub valid_bce: f64,
    pub accuracy: f64,
}

/// For each `(kind, p, seed)`, picks the regularized T2FN run (λ > 0) with the
/// highest validation accuracy, breaking ties by lower validation
/// cross-entropy and then by smaller λ. Diverged runs are never selected.
pub fn select_lambda(results: &[TrainResult]) -> Vec<Selection> {
    let mut out: Vec<Selection> = Vec::new();
    let candidates = results.iter().filter(|r| {
        r.job.variant == RunVariant::Model(Variant::T2fn) && r.job.lambda > 0.0 && r.status == RunStatus::Ok
    });
    for r in candidates {
        let cand = Selection {
            kind: r.job.kind,
            p: r.job.p,
            seed: r.job.seed,
            lambda: r.job.lambda,
            valid_accuracy: r.valid_accuracy,
            valid_bce: r.valid_bce,
            accuracy: r.accuracy,
        };
        let slot = out
            .iter_mut()
            .find(|s| s.kind == cand.kind && s.p == cand.p && s.seed == cand.seed);
        match slot {
            None => out.push(cand),
            Some(s) => {
                let better = cand
                    .valid_accuracy
                    .total_cmp(&s.valid_accuracy)
                    .then(s.valid_bce.total_cmp(&cand.valid_bce))
                    .then(s.lambda.total_cmp(&cand.lambda))
                    == Ordering::Greater;
                if better {
                    *s = cand;
                }
            }
        }
    }
    out.sort_by(|a, b| {
        a.kind
            .name()
            .cmp(b.kind.name())
            .then(a.p.total_cmp(&b.p))
            .then(a.seed.cmp(&b.seed))
    });
    out
}

/// `metrics.csv` rows, one per epoch of every successful run.
pub fn metrics_rows(results: &[TrainResult]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for r in results {
        for m in &r.metrics {
            rows.push(vec![
                r.job.variant.name().to_string(),
                r.job.kind.name().to_string(),
                num(r.job.p),
                num(r.job.lambda),
                r.job.seed.to_string(),
                m.epoch.to_string(),
                num(m.loss),
                num(m.bce),
                num(m.reg),
                num(m.train_accuracy),
                num(m.valid_accuracy),
                num(m.valid_bce),
            ]);
        }
    }
    rows
}

/// `results.csv` rows, one per grid cell.
pub fn results_rows(results: &[TrainResult]) -> Vec<Vec<String>> {
    results
        .iter()
        .map(|r| {
            let accuracy = match r.status {
                RunStatus::Ok => format!("{:.4}", r.accuracy),
                RunStatus::Diverged(_) => String::new(),
            };
            vec![
                r.job.variant.name().to_string(),
                r.job.kind.name().to_string(),
                num(r.job.p),
                num(r.job.lambda),
                r.job.seed.to_string(),
                accuracy,
                r.status.label().to_string(),
            ]
        })
        .collect()
}

pub fn selection_rows(sel: &[Selection]) -> Vec<Vec<String>> {
    sel.iter()
        .map(|s| {
            vec![
                s.kind.name().to_string(),
                num(s.p),
                s.seed.to_string(),
                num(s.lambda),
                num(s.valid_accuracy),
                num(s.valid_bce),
                format!("{:.4}", s.accuracy),
            ]
        })
        .collect()
}

/// Input condition whose fused tensors are analysed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Condition {
    Noise(NoiseKind, f64),
    /// Features replaced by i.i.d. standard Gaussian noise (no latent structure).
    IidGaussian,
}

impl Condition {
    pub fn kind_name(self) -> &'static str {
        match self {
            Condition::Noise(k, _) => k.name(),
            Condition::IidGaussian => "iid_gaussian",
        }
    }

    pub fn p(self) -> f64 {
        match self {
            Condition::Noise(_, p) => p,
            Condition::IidGaussian => 0.0,
        }
    }

    /// The sequence actually encoded for sequence `index` of the analysed split.
    pub fn apply(self, s: &MultimodalSequence, seed: u64, index: usize) -> Result<MultimodalSequence, RunError> {
        Ok(match self {
            Condition::Noise(kind, p) => apply_noise(s, &eval_noise(&NoiseSpec { kind, p, seed }, index))?,
            Condition::IidGaussian => iid_gaussian_like(s, rng::derive_path(seed, &[TAG_IID, index as u64])),
        })
    }
}

#[derive(Debug, Clone)]
pub struct RankGrid {
    pub conditions: Vec<Condition>,
    pub seeds: Vec<u64>,
    /// CP ranks tried, strictly increasing.
    pub ranks: Vec<usize>,
    pub threshold: f64,
    /// Sequences sampled (without replacement) from the analysed split per seed.
    pub n_sequences: usize,
    /// `seed` is ignored; ALS seeds derive from the grid seed and sequence index.
    pub als: AlsConfig,
}

impl RankGrid {
    pub fn validate(&self) -> Result<(), RunError> {
        if self.conditions.is_empty() || self.seeds.is_empty() || self.ranks.is_empty() {
            return Err(RunError::config("conditions, seeds and ranks must be nonempty"));
        }
        if self.ranks[0] == 0 || self.ranks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RunError::config("ranks must be positive and strictly increasing"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(RunError::config("threshold must lie in (0, 1)"));
        }
        if self.n_sequences == 0 {
            return Err(RunError::config("n-sequences must be positive"));
        }
        self.als.validate()?;
        Ok(())
    }
}

/// Rank analysis of one `(condition, seed)` cell.
#[derive(Debug, Clone)]
pub struct RankRow {
    pub condition: Condition,
    pub seed: u64,
    /// Pointwise mean over the sampled sequences of their rank curves.
    pub curve: RankCurve,
    /// Mean surrogate rank over the sampled sequences.
    pub surrogate: f64,
    /// Fraction of sampled sequences whose curve never reached the threshold.
    pub saturated: f64,
}

/// Indices of the sequences analysed for `seed`.
pub fn sample_indices(len: usize, n: usize, seed: u64) -> Vec<usize> {
    let n = n.min(len);
    let mut g = rng::stream(rng::derive_seed(seed, TAG_SUBSET));
    let mut idx = index::sample(&mut g, len, n).into_vec();
    idx.sort_unstable();
    idx
}

/// `ℳ = Σ_t [h_ℓ;1] ⊗ [h_v;1] ⊗ [h_a;1]` for `s`, using the encoders of `encoder`.
pub fn fused_tensor(encoder: &ModelParams, s: &MultimodalSequence) -> Result<FusedTensor, RunError> {
    let hidden = encoder.encode(s)?;
    Ok(FusedTensor::from_hidden(&hidden)?)
}

/// Rank curve of every sampled sequence under one condition and seed.
fn rank_cell(
    encoder: &ModelParams,
    sequences: &[MultimodalSequence],
    grid: &RankGrid,
    condition: Condition,
    seed: u64,
) -> Result<RankRow, RunError> {
    let idx = sample_indices(sequences.len(), grid.n_sequences, seed);
    let mut mean = vec![0.0; grid.ranks.len()];
    let mut surrogate = 0.0;
    let mut saturated = 0usize;
    for &i in &idx {
        let s = condition.apply(&sequences[i], seed, i)?;
        let t = fused_tensor(encoder, &s)?.materialize();
        let als = AlsConfig {
            seed: rng::derive_path(seed, &[TAG_ALS, i as u64]),
            ..grid.als
        };
        let curve = rank_curve(&t, &grid.ranks, &als)?;
        for (m, &(_, e)) in mean.iter_mut().zip(curve.points()) {
            *m += e;
        }
        let r = surrogate_rank(&curve, grid.threshold)?;
        surrogate += r.rank as f64;
        saturated += usize::from(r.saturated);
    }
    let n = idx.len() as f64;
    let points = grid.ranks.iter().zip(&mean).map(|(&r, &e)| (r, e / n)).collect();
    Ok(RankRow {
        condition,
        seed,
        curve: RankCurve::new(points)?,
        surrogate: surrogate / n,
        saturated: saturated as f64 / n,
    })
}

/// Runs the rank analysis over every `(condition, seed)` pair, in the order
/// given by the grid (conditions outer, seeds inner).
pub fn run_rank_grid(
    encoder: &ModelParams,
    sequences: &[MultimodalSequence],
    grid: &RankGrid,
) -> Result<Vec<RankRow>, RunError> {
    grid.validate()?;
    if sequences.is_empty() {
        return Err(RunError::config("no sequences to analyse"));
    }
    if encoder.variant == Variant::EfLstm {
        return Err(RunError::config(
            "rank analysis needs per-modality encoders; ef-lstm checkpoints have none",
        ));
    }
    let cells: Vec<(Condition, u64)> = grid
        .conditions
        .iter()
        .flat_map(|&c| grid.seeds.iter().map(move |&s| (c, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(c, s)| rank_cell(encoder, sequences, grid, c, s))
        .collect()
}

fn row_order(a: &RankRow, b: &RankRow) -> Ordering {
    a.condition
        .kind_name()
        .cmp(b.condition.kind_name())
        .then(a.condition.p().total_cmp(&b.condition.p()))
        .then(a.seed.cmp(&b.seed))
}

/// `rank_curves.csv` rows sorted by kind, p, seed, r.
pub fn rank_curve_rows(rows: &[RankRow]) -> Vec<Vec<String>> {
    let mut sorted: Vec<&RankRow> = rows.iter().collect();
    sorted.sort_by(|a, b| row_order(a, b));
    let mut out = Vec::new();
    for r in sorted {
        for &(rank, e) in r.curve.points() {
            out.push(vec![
                r.condition.kind_name().to_string(),
                num(r.condition.p()),
                r.seed.to_string(),
                rank.to_string(),
                num(e),
            ]);
        }
    }
    out
}

/// `rank_summary.csv` rows sorted by kind, p, seed.
pub fn rank_summary_rows(rows: &[RankRow]) -> Vec<Vec<String>> {
    let mut sorted: Vec<&RankRow> = rows.iter().collect();
    sorted.sort_by(|a, b| row_order(a, b));
    sorted
        .into_iter()
        .map(|r| {
            vec![
                r.condition.kind_name().to_string(),
                num(r.condition.p()),
                r.seed.to_string(),
                num(r.surrogate),
                num(r.saturated),
            ]
        })
        .collect()
}

/// Mean over seeds of the rank curves and surrogate ranks of one condition.
pub fn mean_over_seeds(rows: &[RankRow], condition: Condition) -> Option<(Vec<(usize, f64)>, f64)> {
    let sel: Vec<&RankRow> = rows.iter().filter(|r| r.condition == condition).collect();
    let first = sel.first()?;
    let n = sel.len() as f64;
    let curve = first
        .curve
        .points()
        .iter()
        .enumerate()
        .map(|(k, &(r, _))| (r, sel.iter().map(|x| x.curve.points()[k].1).sum::<f64>() / n))
        .collect();
    let surrogate = sel.iter().map(|x| x.surrogate).sum::<f64>() / n;
    Some((curve, surrogate))
}
