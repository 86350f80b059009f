//! CP decomposition by alternating least squares, and the rank diagnostic
//! built on it: relative reconstruction error as a function of the CP rank,
//! and the smallest rank whose error falls under a threshold.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::linalg::solve_spd_right;
use crate::matrix::Matrix;
use crate::rng;
use crate::tensor::{increment, reconstruct, CpFactors, DenseTensor};
use crate::{Error, Result};

/// Ridge added to the diagonal of the normal-equation matrix.
pub const ALS_RIDGE: f64 = 1e-9;

/// Below this relative error the residual is recomputed from the dense
/// reconstruction rather than the Gram expansion, which loses precision
/// through cancellation when the fit is nearly exact.
const EXACT_RESIDUAL_BELOW: f64 = 1e-3;

/// First sweep after which an extrapolated step along the last update is
/// tried. The step grows as the cube root of the sweep count and is kept
/// only when it lowers the error, so the objective stays monotone; it moves
/// the iteration out of the slow "swamps" that nearly collinear components
/// cause.
const EXTRAPOLATE_FROM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlsConfig {
    pub max_iters: usize,
    /// Stop once the relative fit changes by less than this between sweeps.
    pub tol: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-7,
            seed: 0,
            restarts: 3,
        }
    }
}

impl AlsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol must be positive"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be at least 1"));
        }
        Ok(())
    }
}

/// Result of the best restart of [`cp_als_traced`].
#[derive(Debug, Clone)]
pub struct AlsOutcome {
    pub factors: CpFactors,
    /// `‖reconstruct(factors) − t‖_F / ‖t‖_F`.
    pub rel_error: f64,
    pub iterations: usize,
    /// Relative error after every sweep of the winning restart.
    pub trace: Vec<f64>,
    pub restart: usize,
}

/// Rank-`rank` CP approximation of `t`; returns normalized factors and the
/// relative reconstruction error of the best of `cfg.restarts` runs.
pub fn cp_als(t: &DenseTensor, rank: usize, cfg: &AlsConfig) -> Result<(CpFactors, f64)> {
    let out = cp_als_traced(t, rank, cfg)?;
    Ok((out.factors, out.rel_error))
}

pub fn cp_als_traced(t: &DenseTensor, rank: usize, cfg: &AlsConfig) -> Result<AlsOutcome> {
    cfg.validate()?;
    if rank == 0 {
        return Err(Error::invalid("CP rank must be positive"));
    }
    if !t.is_finite() {
        return Err(Error::invalid("tensor has non-finite entries"));
    }

    if t.is_zero() {
        let mut factors = random_factors(t.shape(), rank, cfg.seed);
        factors.normalize();
        let (weights, _) = factors.parts_mut();
        weights.iter_mut().for_each(|w| *w = 0.0);
        return Ok(AlsOutcome {
            factors,
            rel_error: 0.0,
            iterations: 0,
            trace: Vec::new(),
            restart: 0,
        });
    }

    let mut best: Option<AlsOutcome> = None;
    for restart in 0..cfg.restarts {
        let seed = rng::derive_seed(cfg.seed, restart as u64);
        let run = als_run(t, rank, cfg, seed, restart)?;
        let better = best.as_ref().map_or(true, |b| run.rel_error < b.rel_error);
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn random_factors(shape: &[usize], rank: usize, seed: u64) -> CpFactors {
    let mut g = rng::stream(seed);
    let factors = shape
        .iter()
        .map(|&d| Matrix::from_fn(d, rank, |_, _| StandardNormal.sample(&mut g)))
        .collect();
    CpFactors::new(vec![1.0; rank], factors).expect("consistent random factors")
}

/// Matricized tensor times Khatri-Rao product for `mode`, without forming either.
fn mttkrp(t: &DenseTensor, factors: &[Matrix], mode: usize) -> Matrix {
    let shape = t.shape();
    let r = factors[0].cols();
    let mut out = Matrix::zeros(shape[mode], r);
    let mut idx = vec![0usize; shape.len()];
    let mut prod = vec![0.0; r];
    for &x in t.data() {
        if x != 0.0 {
            prod.iter_mut().for_each(|p| *p = x);
            for (m, f) in factors.iter().enumerate() {
                if m == mode {
                    continue;
                }
                for (p, w) in prod.iter_mut().zip(f.row(idx[m])) {
                    *p *= w;
                }
            }
            for (o, p) in out.row_mut(idx[mode]).iter_mut().zip(&prod) {
                *o += p;
            }
        }
        increment(&mut idx, shape);
    }
    out
}

fn als_run(
    t: &DenseTensor,
    rank: usize,
    cfg: &AlsConfig,
    seed: u64,
    restart: usize,
) -> Result<AlsOutcome> {
    let order = t.order();
    let norm_x = t.frobenius_norm();
    let norm_x_sq = norm_x * norm_x;

    let mut model = random_factors(t.shape(), rank, seed);
    model.normalize();
    let mut grams: Vec<Matrix> = model.factors().iter().map(Matrix::gram).collect();

    let mut trace = Vec::new();
    let mut previous: Option<CpFactors> = None;
    let mut prev_err = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        let mut last_mttkrp = None;
        for mode in 0..order {
            let m = mttkrp(t, model.factors(), mode);
            let mut v = Matrix::from_fn(rank, rank, |_, _| 1.0);
            for (k, g) in grams.iter().enumerate() {
                if k != mode {
                    v.hadamard_assign(g);
                }
            }
            for i in 0..rank {
                v.set(i, i, v.get(i, i) + ALS_RIDGE);
            }
            let updated = solve_spd_right(&m, &v)?;
            let (weights, factors) = model.parts_mut();
            factors[mode] = updated;
            weights.iter_mut().for_each(|w| *w = 1.0);
            normalize_mode(weights, &mut factors[mode]);
            grams[mode] = factors[mode].gram();
            if mode + 1 == order {
                last_mttkrp = Some(m);
            }
        }

        let mut err = residual(t, &model, &grams, last_mttkrp.as_ref(), norm_x_sq);
        if let Some(prev) = previous.as_ref().filter(|_| iterations >= EXTRAPOLATE_FROM) {
            let step = libm::cbrt(iterations as f64);
            let jump = extrapolate(prev, &model, step);
            let jump_err = reconstruct(&jump).sub(t)?.frobenius_norm() / norm_x;
            if jump_err < err {
                model = jump;
                grams = model.factors().iter().map(Matrix::gram).collect();
                err = jump_err;
            }
        }
        previous = Some(model.clone());
        trace.push(err);
        let converged = (prev_err - err).abs() < cfg.tol || err < 1e-14;
        prev_err = err;
        if converged {
            break;
        }
    }

    // Every mode but the last is unit-norm already; the last carries λ.
    model.normalize();
    let rel_error = reconstruct(&model).sub(t)?.frobenius_norm() / norm_x;
    Ok(AlsOutcome {
        factors: model,
        rel_error,
        iterations,
        trace,
        restart,
    })
}

/// `prev + step · (next − prev)` with the weights folded into the last mode,
/// renormalized. Both models share the column-scaling convention of a sweep:
/// every mode but the last has unit columns.
fn extrapolate(prev: &CpFactors, next: &CpFactors, step: f64) -> CpFactors {
    let order = next.order();
    let mut factors: Vec<Matrix> = Vec::with_capacity(order);
    for mode in 0..order {
        let (a, b) = (&prev.factors()[mode], &next.factors()[mode]);
        let last = mode + 1 == order;
        factors.push(Matrix::from_fn(a.rows(), a.cols(), |i, k| {
            let (x, y) = if last {
                (prev.weights()[k] * a.get(i, k), next.weights()[k] * b.get(i, k))
            } else {
                (a.get(i, k), b.get(i, k))
            };
            x + step * (y - x)
        }));
    }
    let mut out = CpFactors::from_factors(factors).expect("consistent factors");
    out.normalize();
    out
}

fn normalize_mode(weights: &mut [f64], f: &mut Matrix) {
    for k in 0..f.cols() {
        let n = libm::sqrt((0..f.rows()).map(|i| f.get(i, k) * f.get(i, k)).sum::<f64>());
        if n > 0.0 {
            for i in 0..f.rows() {
                f.set(i, k, f.get(i, k) / n);
            }
            weights[k] = n;
        } else {
            for i in 0..f.rows() {
                f.set(i, k, if i == 0 { 1.0 } else { 0.0 });
            }
            weights[k] = 0.0;
        }
    }
}

/// Relative residual of the current model.
fn residual(
    t: &DenseTensor,
    model: &CpFactors,
    grams: &[Matrix],
    last_mttkrp: Option<&Matrix>,
    norm_x_sq: f64,
) -> f64 {
    let lambda = model.weights();
    let r = lambda.len();
    let last = model.factors().last().expect("order >= 1");
    let estimate = last_mttkrp.map(|m| {
        let mut inner = 0.0;
        for k in 0..r {
            let col: f64 = (0..last.rows()).map(|i| last.get(i, k) * m.get(i, k)).sum();
            inner += lambda[k] * col;
        }
        let mut gram = Matrix::from_fn(r, r, |_, _| 1.0);
        for g in grams {
            gram.hadamard_assign(g);
        }
        let mut model_sq = 0.0;
        for i in 0..r {
            for j in 0..r {
                model_sq += lambda[i] * lambda[j] * gram.get(i, j);
            }
        }
        libm::sqrt((norm_x_sq - 2.0 * inner + model_sq).max(0.0) / norm_x_sq)
    });
    match estimate {
        Some(e) if e >= EXACT_RESIDUAL_BELOW => e,
        _ => {
            let diff = reconstruct(model).sub(t).expect("shapes agree");
            diff.frobenius_norm() / libm::sqrt(norm_x_sq)
        }
    }
}

/// Relative reconstruction error against tried CP rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RankCurve {
    points: Vec<(usize, f64)>,
}

impl RankCurve {
    pub fn new(points: Vec<(usize, f64)>) -> Result<Self> {
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("rank curve ranks must be strictly increasing"));
        }
        if points.iter().any(|p| !(p.1 >= 0.0)) {
            return Err(Error::invalid("rank curve errors must be nonnegative"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(usize, f64)] {
        &self.points
    }

    pub fn epsilon_at(&self, rank: usize) -> Option<f64> {
        self.points.iter().find(|p| p.0 == rank).map(|p| p.1)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One [`cp_als`] per rank (seed derived from `cfg.seed` and the rank), with
/// the running minimum taken over increasing rank.
pub fn rank_curve(t: &DenseTensor, ranks: &[usize], cfg: &AlsConfig) -> Result<RankCurve> {
    if ranks.is_empty() {
        return Err(Error::invalid("rank grid is empty"));
    }
    if ranks[0] == 0 || ranks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "rank grid must be positive and strictly increasing, got {ranks:?}"
        )));
    }
    let mut points = Vec::with_capacity(ranks.len());
    let mut running = f64::INFINITY;
    for &r in ranks {
        let rcfg = AlsConfig {
            seed: rng::derive_seed(cfg.seed, r as u64),
            ..*cfg
        };
        let (_, eps) = cp_als(t, r, &rcfg)?;
        running = running.min(eps);
        points.push((r, running));
    }
    RankCurve::new(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SurrogateRank {
    pub rank: usize,
    /// No tried rank reached the threshold; `rank` is the largest tried.
    pub saturated: bool,
}

/// Smallest tried rank with relative error at or below `threshold`.
pub fn surrogate_rank(curve: &RankCurve, threshold: f64) -> Result<SurrogateRank> {
    let last = curve
        .points()
        .last()
        .ok_or_else(|| Error::invalid("rank curve is empty"))?;
    Ok(match curve.points().iter().find(|p| p.1 <= threshold) {
        Some(p) => SurrogateRank {
            rank: p.0,
            saturated: false,
        },
        None => SurrogateRank {
            rank: last.0,
            saturated: true,
        },
    })
}
