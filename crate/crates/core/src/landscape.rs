//! Synthetic epoch-time landscapes.
//!
//! `T(n, s, t) = w(n) * max(S / (n s^a), C / (n t^b)) + k_sync * n` with
//! `w(n) = 1 + gamma (n - 1)`. The `max` stands for the sampler/trainer
//! pipeline bottleneck, `w(n)` for workload inflation when the batch is split
//! across processes, and the linear term for synchronization cost.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config_space::{Configuration, SearchSpace, SpaceError};
use crate::rng;
use crate::tuners::{EvaluationTarget, TargetError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandscapeError {
    #[error("invalid landscape parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("could not separate preset optima after {0} adjustments")]
    IndistinctPresets(usize),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeParams {
    pub name: String,
    /// Sampling work units.
    pub sampling_work: f64,
    /// Compute work units.
    pub compute_work: f64,
    /// Per-process workload inflation rate.
    pub inflation: f64,
    /// Synchronization cost per process, seconds.
    pub sync_cost: f64,
    pub sampling_exponent: f64,
    pub training_exponent: f64,
    /// Standard deviation of additive noise, seconds; zero disables noise.
    pub noise_std: f64,
    pub seed: u64,
}

impl LandscapeParams {
    pub fn validate(&self) -> Result<(), LandscapeError> {
        let finite = [
            self.sampling_work,
            self.compute_work,
            self.inflation,
            self.sync_cost,
            self.sampling_exponent,
            self.training_exponent,
            self.noise_std,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(LandscapeError::InvalidParameter("non-finite value"));
        }
        if self.sampling_work <= 0.0 || self.compute_work <= 0.0 {
            return Err(LandscapeError::InvalidParameter("work units must be positive"));
        }
        if self.inflation < 0.0 || self.sync_cost < 0.0 || self.noise_std < 0.0 {
            return Err(LandscapeError::InvalidParameter(
                "inflation, sync cost and noise must be non-negative",
            ));
        }
        let in_unit = |e: f64| e > 0.0 && e <= 1.0;
        if !in_unit(self.sampling_exponent) || !in_unit(self.training_exponent) {
            return Err(LandscapeError::InvalidParameter("exponents must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Noise-free epoch time.
    pub fn mean_time(&self, cfg: &Configuration) -> f64 {
        let n = f64::from(cfg.n_processes);
        let s = f64::from(cfg.n_sampling_cores);
        let t = f64::from(cfg.n_training_cores);
        let inflation = 1.0 + self.inflation * (n - 1.0);
        let sampling = self.sampling_work / (n * s.powf(self.sampling_exponent));
        let training = self.compute_work / (n * t.powf(self.training_exponent));
        inflation * sampling.max(training) + self.sync_cost * n
    }

    /// Epoch time for the `draw_index`-th evaluation of `cfg`.
    pub fn evaluate(&self, cfg: &Configuration, draw_index: u64) -> f64 {
        let base = self.mean_time(cfg);
        if self.noise_std == 0.0 {
            return base;
        }
        let mut r = rng::keyed(&[
            self.seed,
            u64::from(cfg.n_processes),
            u64::from(cfg.n_sampling_cores),
            u64::from(cfg.n_training_cores),
            draw_index,
        ]);
        let z: f64 = StandardNormal.sample(&mut r);
        // keep the result positive even for large noise
        (base + self.noise_std * z.clamp(-3.0, 3.0)).max(base * 1e-3)
    }

    /// Exhaustive noise-free argmin over `space` (ties to the earliest configuration).
    pub fn optimum(&self, space: &SearchSpace) -> Result<(Configuration, f64), SpaceError> {
        let mut best: Option<(Configuration, f64)> = None;
        for cfg in space.enumerate()? {
            let v = self.mean_time(&cfg);
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((cfg, v));
            }
        }
        Ok(best.expect("enumerate never returns an empty list"))
    }
}

/// Evaluation target backed by a landscape; each call uses the next draw index.
#[derive(Debug, Clone)]
pub struct LandscapeTarget {
    pub params: LandscapeParams,
    draws: u64,
}

impl LandscapeTarget {
    pub fn new(params: LandscapeParams) -> Self {
        Self { params, draws: 0 }
    }
}

impl EvaluationTarget for LandscapeTarget {
    fn evaluate(&mut self, cfg: &Configuration) -> Result<f64, TargetError> {
        let t = self.params.evaluate(cfg, self.draws);
        self.draws += 1;
        Ok(t)
    }
}

fn preset(name: &str, s: f64, c: f64, gamma: f64, kappa: f64, a: f64, b: f64) -> LandscapeParams {
    LandscapeParams {
        name: name.to_string(),
        sampling_work: s,
        compute_work: c,
        inflation: gamma,
        sync_cost: kappa,
        sampling_exponent: a,
        training_exponent: b,
        noise_std: 0.0,
        seed: 0,
    }
}

/// Hand-designed setups spanning sampler-bound and compute-bound regimes with
/// cheap and expensive synchronization.
pub fn base_presets() -> Vec<LandscapeParams> {
    vec![
        preset("neighbor-sage-like", 400.0, 900.0, 0.10, 4.0, 0.8, 0.9),
        preset("shadow-gcn-like", 120.0, 1500.0, 0.05, 1.0, 0.9, 0.85),
        preset("sampler-bound", 1200.0, 500.0, 0.30, 10.0, 0.6, 0.9),
        preset("compute-bound-sync-heavy", 150.0, 2500.0, 0.15, 12.0, 0.9, 0.8),
        preset("lightweight-many-procs", 300.0, 600.0, 0.08, 2.0, 0.75, 0.95),
    ]
}

/// The preset suite on `space`, with optima verified pairwise distinct.
/// A preset whose optimum coincides with an earlier one has its
/// synchronization cost scaled until the optima separate.
pub fn preset_suite(space: &SearchSpace) -> Result<Vec<LandscapeParams>, LandscapeError> {
    const MAX_ADJUST: usize = 32;
    let mut out: Vec<LandscapeParams> = Vec::new();
    let mut optima: Vec<Configuration> = Vec::new();
    for mut p in base_presets() {
        p.validate()?;
        let mut tries = 0;
        loop {
            let (opt, _) = p.optimum(space)?;
            if !optima.contains(&opt) {
                optima.push(opt);
                break;
            }
            tries += 1;
            if tries > MAX_ADJUST {
                return Err(LandscapeError::IndistinctPresets(tries));
            }
            p.sync_cost = if p.sync_cost == 0.0 { 0.1 } else { p.sync_cost * 1.5 };
        }
        out.push(p);
    }
    Ok(out)
}

/// Random landscapes for property tests.
pub fn random_params<R: Rng + ?Sized>(rng: &mut R, name: &str) -> LandscapeParams {
    preset(
        name,
        rng.random_range(50.0..2000.0),
        rng.random_range(50.0..2000.0),
        rng.random_range(0.0..0.3),
        rng.random_range(0.0..10.0),
        rng.random_range(0.3..=1.0),
        rng.random_range(0.3..=1.0),
    )
}
