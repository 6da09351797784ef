//! Gaussian-process surrogate over normalized configurations.
//!
//! Targets are standardized to zero mean and unit variance before fitting, so
//! the signal variance is fixed at one and only the per-dimension Matérn 5/2
//! length-scales and the noise ratio are learned. Hyperparameters come from a
//! bounded log-space grid search on the log marginal likelihood followed by a
//! coordinate refinement, which keeps fitting derivative-free and
//! deterministic.

use std::collections::HashSet;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::config_space::{Configuration, SearchSpace, SpaceError};

/// Input dimensionality (processes, sampling cores, training cores).
pub const DIM: usize = 3;
/// Exploration margin used by the tuner.
pub const DEFAULT_XI: f64 = 0.01;
/// Lower bound on the noise variance added to the kernel diagonal.
pub const MIN_NOISE_VARIANCE: f64 = 1e-6;

const LENGTH_SCALE_BOUNDS: (f64, f64) = (0.05, 2.0);
const NOISE_RATIO_BOUNDS: (f64, f64) = (1e-6, 1e-2);
const LENGTH_SCALE_GRID: usize = 5;
const NOISE_GRID: usize = 3;
const FALLBACK_LENGTH_SCALE: f64 = 0.3;
const JITTERS: [f64; 5] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("need at least 2 observations to fit, got {0}")]
    InsufficientData(usize),
    #[error("inputs and targets differ in length ({inputs} vs {targets})")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("non-finite target at index {0}")]
    NonFiniteTarget(usize),
    #[error("input {0} lies outside the unit cube")]
    InputOutOfRange(usize),
    #[error("kernel matrix is not positive definite even with jitter {0:e}")]
    IllConditioned(f64),
    #[error("every configuration in the space has already been evaluated")]
    Exhausted,
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Matérn 5/2 hyperparameters in standardized-target units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub length_scales: [f64; DIM],
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn isotropic(length_scale: f64, noise_variance: f64) -> Self {
        Self {
            length_scales: [length_scale; DIM],
            signal_variance: 1.0,
            noise_variance,
        }
    }

    fn validate(&self) -> Self {
        let mut p = *self;
        for l in &mut p.length_scales {
            *l = l.max(1e-9);
        }
        p.signal_variance = p.signal_variance.max(1e-12);
        p.noise_variance = p.noise_variance.max(MIN_NOISE_VARIANCE);
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub enum HyperPolicy {
    Fixed(KernelParams),
    /// Grid search on the log marginal likelihood, then coordinate refinement.
    #[default]
    MaximizeLikelihood,
}


/// Posterior at one query point, in standardized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub std: f64,
}

/// Matérn 5/2 correlation for a scaled distance `r`.
fn matern52(r: f64) -> f64 {
    let s5r = 5f64.sqrt() * r;
    (1.0 + s5r + 5.0 / 3.0 * r * r) * (-s5r).exp()
}

fn scaled_distance(a: &[f64; DIM], b: &[f64; DIM], ls: &[f64; DIM]) -> f64 {
    let mut acc = 0.0;
    for d in 0..DIM {
        let z = (a[d] - b[d]) / ls[d];
        acc += z * z;
    }
    acc.sqrt()
}

/// Squared per-dimension differences for all pairs, reused across grid points.
struct PairDiffs {
    n: usize,
    sq: Vec<[f64; DIM]>,
}

impl PairDiffs {
    fn new(x: &[[f64; DIM]]) -> Self {
        let n = x.len();
        let mut sq = vec![[0.0; DIM]; n * n];
        for i in 0..n {
            for j in 0..n {
                for d in 0..DIM {
                    let z = x[i][d] - x[j][d];
                    sq[i * n + j][d] = z * z;
                }
            }
        }
        Self { n, sq }
    }

    fn kernel(&self, p: &KernelParams) -> DMatrix<f64> {
        let inv: [f64; DIM] = std::array::from_fn(|d| 1.0 / (p.length_scales[d] * p.length_scales[d]));
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| {
            let s = &self.sq[i * n + j];
            let r = (s[0] * inv[0] + s[1] * inv[1] + s[2] * inv[2]).sqrt();
            let mut k = p.signal_variance * matern52(r);
            if i == j {
                k += p.noise_variance;
            }
            k
        })
    }
}

fn factorize(mut k: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64), SurrogateError> {
    if let Some(ch) = k.clone().cholesky() {
        return Ok((ch, 0.0));
    }
    let n = k.nrows();
    let mut added = 0.0;
    for &jitter in &JITTERS {
        for i in 0..n {
            k[(i, i)] += jitter - added;
        }
        added = jitter;
        if let Some(ch) = k.clone().cholesky() {
            return Ok((ch, jitter));
        }
    }
    Err(SurrogateError::IllConditioned(*JITTERS.last().unwrap()))
}

fn log_marginal_likelihood(diffs: &PairDiffs, y: &DVector<f64>, p: &KernelParams) -> Option<f64> {
    let ch = diffs.kernel(p).cholesky()?;
    let alpha = ch.solve(y);
    let log_det: f64 = ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    let n = y.len() as f64;
    let v = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    v.is_finite().then_some(v)
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Log-space parameters: three log length-scales and the log noise ratio.
fn params_from_log(theta: &[f64; DIM + 1]) -> KernelParams {
    KernelParams {
        length_scales: [theta[0].exp(), theta[1].exp(), theta[2].exp()],
        signal_variance: 1.0,
        noise_variance: theta[3].exp().max(MIN_NOISE_VARIANCE),
    }
}

fn select_hyperparams(diffs: &PairDiffs, y: &DVector<f64>) -> KernelParams {
    let ls_grid = log_grid(LENGTH_SCALE_BOUNDS.0, LENGTH_SCALE_BOUNDS.1, LENGTH_SCALE_GRID);
    let noise_grid = log_grid(NOISE_RATIO_BOUNDS.0, NOISE_RATIO_BOUNDS.1, NOISE_GRID);

    let mut best: Option<([f64; DIM + 1], f64)> = None;
    for &l0 in &ls_grid {
        for &l1 in &ls_grid {
            for &l2 in &ls_grid {
                for &nz in &noise_grid {
                    let theta = [l0.ln(), l1.ln(), l2.ln(), nz.ln()];
                    if let Some(v) = log_marginal_likelihood(diffs, y, &params_from_log(&theta)) {
                        if best.as_ref().is_none_or(|(_, b)| v > *b) {
                            best = Some((theta, v));
                        }
                    }
                }
            }
        }
    }
    let Some((mut theta, mut value)) = best else {
        return KernelParams::isotropic(FALLBACK_LENGTH_SCALE, MIN_NOISE_VARIANCE);
    };

    let bounds = [
        (LENGTH_SCALE_BOUNDS.0.ln(), LENGTH_SCALE_BOUNDS.1.ln()),
        (LENGTH_SCALE_BOUNDS.0.ln(), LENGTH_SCALE_BOUNDS.1.ln()),
        (LENGTH_SCALE_BOUNDS.0.ln(), LENGTH_SCALE_BOUNDS.1.ln()),
        (NOISE_RATIO_BOUNDS.0.ln(), NOISE_RATIO_BOUNDS.1.ln()),
    ];
    let ls_step = (bounds[0].1 - bounds[0].0) / (LENGTH_SCALE_GRID - 1) as f64;
    let noise_step = (bounds[3].1 - bounds[3].0) / (NOISE_GRID - 1) as f64;
    let mut steps = [ls_step / 2.0, ls_step / 2.0, ls_step / 2.0, noise_step / 2.0];
    for _round in 0..3 {
        for d in 0..=DIM {
            for dir in [-1.0, 1.0] {
                let mut cand = theta;
                cand[d] = (cand[d] + dir * steps[d]).clamp(bounds[d].0, bounds[d].1);
                if cand[d] == theta[d] {
                    continue;
                }
                if let Some(v) = log_marginal_likelihood(diffs, y, &params_from_log(&cand)) {
                    if v > value {
                        theta = cand;
                        value = v;
                    }
                }
            }
        }
        for s in &mut steps {
            *s /= 2.0;
        }
    }
    params_from_log(&theta)
}

/// A fitted GP posterior. Immutable after [`GpSurrogate::fit`].
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    inputs: Vec<[f64; DIM]>,
    targets: Vec<f64>,
    target_mean: f64,
    target_scale: f64,
    params: KernelParams,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpSurrogate {
    /// Fit on raw targets; they are standardized internally.
    pub fn fit(
        inputs: &[[f64; DIM]],
        targets: &[f64],
        policy: HyperPolicy,
    ) -> Result<Self, SurrogateError> {
        if inputs.len() != targets.len() {
            return Err(SurrogateError::LengthMismatch {
                inputs: inputs.len(),
                targets: targets.len(),
            });
        }
        if inputs.len() < 2 {
            return Err(SurrogateError::InsufficientData(inputs.len()));
        }
        if let Some(i) = targets.iter().position(|t| !t.is_finite()) {
            return Err(SurrogateError::NonFiniteTarget(i));
        }
        if let Some(i) = inputs
            .iter()
            .position(|x| x.iter().any(|v| !(0.0..=1.0).contains(v)))
        {
            return Err(SurrogateError::InputOutOfRange(i));
        }

        let n = targets.len() as f64;
        let mean = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        let scale = if var.sqrt() > 1e-12 * mean.abs().max(1.0) {
            var.sqrt()
        } else {
            1.0
        };
        let standardized: Vec<f64> = targets.iter().map(|t| (t - mean) / scale).collect();
        let y = DVector::from_column_slice(&standardized);

        let diffs = PairDiffs::new(inputs);
        let params = match policy {
            HyperPolicy::Fixed(p) => p.validate(),
            HyperPolicy::MaximizeLikelihood => select_hyperparams(&diffs, &y),
        };
        let (chol, jitter) = factorize(diffs.kernel(&params))?;
        let alpha = chol.solve(&y);
        Ok(Self {
            inputs: inputs.to_vec(),
            targets: standardized,
            target_mean: mean,
            target_scale: scale,
            params,
            chol,
            alpha,
            jitter,
        })
    }

    pub fn kernel_params(&self) -> &KernelParams {
        &self.params
    }

    /// Diagonal jitter that had to be added for the factorization to succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Standardized training targets.
    pub fn standardized_targets(&self) -> &[f64] {
        &self.targets
    }

    /// Smallest standardized target, the incumbent for minimization.
    pub fn best_standardized(&self) -> f64 {
        self.targets.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn standardize(&self, raw: f64) -> f64 {
        (raw - self.target_mean) / self.target_scale
    }

    pub fn destandardize(&self, p: Prediction) -> Prediction {
        Prediction {
            mean: p.mean * self.target_scale + self.target_mean,
            std: p.std * self.target_scale,
        }
    }

    /// Latent posterior mean and standard deviation in standardized units.
    pub fn predict(&self, query: &[f64; DIM]) -> Prediction {
        let k_star = DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|x| {
                self.params.signal_variance
                    * matern52(scaled_distance(query, x, &self.params.length_scales))
            }),
        );
        let mean = k_star.dot(&self.alpha);
        let v = self.chol.l_dirty().solve_lower_triangular(&k_star);
        let var = match v {
            Some(v) => self.params.signal_variance - v.dot(&v),
            None => self.params.signal_variance - k_star.dot(&self.chol.solve(&k_star)),
        };
        Prediction {
            mean,
            std: var.max(0.0).sqrt(),
        }
    }

    /// Posterior in the original target units.
    pub fn predict_raw(&self, query: &[f64; DIM]) -> Prediction {
        self.destandardize(self.predict(query))
    }
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected Improvement for minimization from a posterior mean and std.
pub fn expected_improvement_from(mean: f64, std: f64, best: f64, xi: f64) -> f64 {
    let improvement = best - mean - xi;
    if std <= 0.0 {
        return improvement.max(0.0);
    }
    let z = improvement / std;
    (improvement * std_normal_cdf(z) + std * std_normal_pdf(z)).max(0.0)
}

/// EI at `query`; `best_observed` is in standardized units.
pub fn expected_improvement(
    model: &GpSurrogate,
    query: &[f64; DIM],
    best_observed: f64,
    xi: f64,
) -> f64 {
    let p = model.predict(query);
    expected_improvement_from(p.mean, p.std, best_observed, xi)
}

/// The unevaluated configuration with maximal EI; ties go to the
/// lexicographically smallest configuration.
pub fn suggest_next(
    model: &GpSurrogate,
    space: &SearchSpace,
    evaluated: &HashSet<Configuration>,
) -> Result<Configuration, SurrogateError> {
    suggest_next_with(model, space, evaluated, DEFAULT_XI)
}

pub fn suggest_next_with(
    model: &GpSurrogate,
    space: &SearchSpace,
    evaluated: &HashSet<Configuration>,
    xi: f64,
) -> Result<Configuration, SurrogateError> {
    let best = model.best_standardized();
    let mut choice: Option<(Configuration, f64)> = None;
    for cfg in space.enumerate()? {
        if evaluated.contains(&cfg) {
            continue;
        }
        let ei = expected_improvement(model, &space.normalize(&cfg)?, best, xi);
        if choice.as_ref().is_none_or(|(_, b)| ei > *b) {
            choice = Some((cfg, ei));
        }
    }
    choice.map(|(c, _)| c).ok_or(SurrogateError::Exhausted)
}
