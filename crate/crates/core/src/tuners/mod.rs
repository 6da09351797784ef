//! Configuration search strategies.
//!
//! Every tuner drives an [`EvaluationTarget`] one configuration at a time and
//! records an [`ObservationTrace`]. The Bayesian tuner follows the online
//! schedule: search for `num_searches` epochs, then reuse the best
//! configuration for the rest of training.

mod anneal;
mod bayes;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config_space::{Configuration, SearchSpace, SpaceError};
use crate::gp::SurrogateError;

pub use anneal::{acceptance_probability, simulated_annealing, AnnealSchedule};
pub use bayes::{bayes_tune, bayes_tune_with, BayesOptions, K_INIT};

/// Failure reported by an evaluation target for one configuration.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct TargetError(pub String);

impl TargetError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

/// Anything that maps a configuration to an epoch time in seconds.
pub trait EvaluationTarget {
    fn evaluate(&mut self, cfg: &Configuration) -> Result<f64, TargetError>;
}

impl<F> EvaluationTarget for F
where
    F: FnMut(&Configuration) -> Result<f64, TargetError>,
{
    fn evaluate(&mut self, cfg: &Configuration) -> Result<f64, TargetError> {
        self(cfg)
    }
}

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("every evaluation failed; last error: {0}")]
    AllEvaluationsFailed(String),
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Search,
    Reuse,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Search => "search",
            Phase::Reuse => "reuse",
        })
    }
}

/// One evaluated epoch. Failed evaluations carry `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub config: Configuration,
    pub epoch_time: f64,
    pub best_so_far: f64,
    pub phase: Phase,
}

impl TraceEntry {
    pub fn failed(&self) -> bool {
        !self.epoch_time.is_finite()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationTrace {
    entries: Vec<TraceEntry>,
}

impl ObservationTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<TraceEntry>) -> Self {
        Self { entries }
    }

    /// Append an observation, maintaining the running minimum.
    pub fn record(&mut self, config: Configuration, epoch_time: f64, phase: Phase) -> &TraceEntry {
        let prev = self.best_time();
        let best_so_far = if epoch_time < prev { epoch_time } else { prev };
        self.entries.push(TraceEntry {
            iter: self.entries.len(),
            config,
            epoch_time,
            best_so_far,
            phase,
        });
        self.entries.last().unwrap()
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn best_time(&self) -> f64 {
        self.entries
            .last()
            .map(|e| e.best_so_far)
            .unwrap_or(f64::INFINITY)
    }

    pub fn search_count(&self) -> usize {
        self.entries.iter().filter(|e| e.phase == Phase::Search).count()
    }

    /// Earliest search-phase entry with the minimal finite epoch time.
    pub fn best_search_entry(&self) -> Option<&TraceEntry> {
        self.entries
            .iter()
            .filter(|e| e.phase == Phase::Search && !e.failed())
            .fold(None, |acc: Option<&TraceEntry>, e| match acc {
                Some(b) if b.epoch_time <= e.epoch_time => Some(b),
                _ => Some(e),
            })
    }

    pub fn is_monotone(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| w[1].best_so_far <= w[0].best_so_far)
    }
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub best: Configuration,
    pub best_time: f64,
    pub trace: ObservationTrace,
}

/// Search and training horizon for one tuning run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TunerBudget {
    pub num_searches: usize,
    pub total_epochs: usize,
}

impl TunerBudget {
    pub fn new(num_searches: usize, total_epochs: usize) -> Result<Self, TuneError> {
        if num_searches == 0 {
            return Err(TuneError::InvalidBudget("num_searches must be positive".into()));
        }
        if total_epochs < num_searches {
            return Err(TuneError::InvalidBudget(format!(
                "total_epochs ({total_epochs}) < num_searches ({num_searches})"
            )));
        }
        Ok(Self {
            num_searches,
            total_epochs,
        })
    }

    /// `ceil(fraction * size)` searches, at least 5.
    pub fn searches_for(space_size: usize, fraction: f64) -> usize {
        ((fraction * space_size as f64).ceil() as usize).max(5)
    }

    /// The default 5% budget with no reuse phase.
    pub fn default_for(space: &SearchSpace) -> Result<Self, TuneError> {
        let n = Self::searches_for(space.enumerate()?.len(), 0.05);
        Self::new(n, n)
    }
}

/// Finish a run whose best configuration may be absent because everything failed.
fn conclude(
    trace: ObservationTrace,
    last_error: Option<TargetError>,
) -> Result<TuneOutcome, TuneError> {
    match trace.best_search_entry() {
        Some(e) => Ok(TuneOutcome {
            best: e.config,
            best_time: e.epoch_time,
            trace,
        }),
        None => Err(TuneError::AllEvaluationsFailed(
            last_error.map(|e| e.0).unwrap_or_else(|| "no evaluations".into()),
        )),
    }
}

fn run_one<T: EvaluationTarget + ?Sized>(
    target: &mut T,
    cfg: &Configuration,
    last_error: &mut Option<TargetError>,
) -> f64 {
    match target.evaluate(cfg) {
        Ok(t) if t.is_finite() && t > 0.0 => t,
        Ok(t) => {
            *last_error = Some(TargetError(format!("non-positive or non-finite time {t} at {cfg}")));
            f64::INFINITY
        }
        Err(e) => {
            log::warn!("evaluation of {cfg} failed: {e}");
            *last_error = Some(e);
            f64::INFINITY
        }
    }
}

/// Evaluate every configuration once in enumeration order.
pub fn exhaustive_search<T: EvaluationTarget + ?Sized>(
    space: &SearchSpace,
    target: &mut T,
) -> Result<TuneOutcome, TuneError> {
    let mut trace = ObservationTrace::new();
    let mut last_error = None;
    for cfg in space.enumerate()? {
        let t = run_one(target, &cfg, &mut last_error);
        trace.record(cfg, t, Phase::Search);
    }
    conclude(trace, last_error)
}

/// The static single-process setup: `min(4, cores - 1)` sampling cores, one
/// core left to the main process, the rest for training (at least one), all
/// clipped to the space's caps.
pub fn default_policy(space: &SearchSpace) -> Result<Configuration, SpaceError> {
    if space.total_cores < 2 {
        return Err(SpaceError::EmptySpace {
            total_cores: space.total_cores,
        });
    }
    let s = 4
        .min(space.total_cores - 1)
        .min(space.max_sampling_cores.unwrap_or(u32::MAX))
        .max(1);
    let t = (space.total_cores - 1 - s)
        .max(1)
        .min(space.max_training_cores.unwrap_or(u32::MAX))
        .max(1);
    let cfg = Configuration::new(1, s, t);
    if space.contains(&cfg) {
        Ok(cfg)
    } else {
        Err(SpaceError::InvalidConfiguration(cfg))
    }
}

/// Run a fixed configuration for `epochs` epochs, recording each as reuse.
pub fn fixed_run<T: EvaluationTarget + ?Sized>(
    cfg: Configuration,
    target: &mut T,
    epochs: usize,
) -> Result<TuneOutcome, TuneError> {
    let mut trace = ObservationTrace::new();
    let mut last_error = None;
    for i in 0..epochs {
        let phase = if i == 0 { Phase::Search } else { Phase::Reuse };
        let t = run_one(target, &cfg, &mut last_error);
        trace.record(cfg, t, phase);
    }
    conclude(trace, last_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{base_presets, LandscapeTarget};

    #[test]
    fn exhaustive_picks_argmin() {
        let space = SearchSpace::with_caps(3, 1, Some(2), Some(2));
        let all = space.enumerate().unwrap();
        assert_eq!(all.len(), 3);
        let values = [5.0, 3.0, 7.0];
        let mut target = |c: &Configuration| {
            Ok(values[all.iter().position(|a| a == c).unwrap()])
        };
        let out = exhaustive_search(&space, &mut target).unwrap();
        assert_eq!(out.best, all[1]);
        assert_eq!(out.best_time, 3.0);
        assert_eq!(out.trace.len(), 3);
        assert!(out.trace.is_monotone());
    }

    #[test]
    fn exhaustive_on_singleton_and_full_length() {
        let mut t = LandscapeTarget::new(base_presets().remove(0));
        let out = exhaustive_search(&SearchSpace::new(2), &mut t).unwrap();
        assert_eq!(out.best, Configuration::new(1, 1, 1));
        let space = SearchSpace::new(12);
        let out = exhaustive_search(&space, &mut t).unwrap();
        assert_eq!(out.trace.len(), space.len());
    }

    #[test]
    fn exhaustive_skips_failures_and_errors_when_all_fail() {
        let space = SearchSpace::new(6);
        let mut flaky = |c: &Configuration| {
            if c.n_processes == 1 {
                Err(TargetError::new("boom"))
            } else {
                Ok(f64::from(c.n_training_cores))
            }
        };
        let out = exhaustive_search(&space, &mut flaky).unwrap();
        assert_eq!(out.best, Configuration::new(2, 1, 1));
        assert!(out.trace.entries().iter().any(|e| e.failed()));
        assert!(out.trace.is_monotone());

        let mut broken = |_: &Configuration| -> Result<f64, TargetError> {
            Err(TargetError::new("down"))
        };
        assert!(matches!(
            exhaustive_search(&space, &mut broken),
            Err(TuneError::AllEvaluationsFailed(m)) if m == "down"
        ));
    }

    #[test]
    fn default_policy_rule() {
        assert_eq!(
            default_policy(&SearchSpace::new(8)).unwrap(),
            Configuration::new(1, 4, 3)
        );
        assert_eq!(
            default_policy(&SearchSpace::new(2)).unwrap(),
            Configuration::new(1, 1, 1)
        );
        assert_eq!(
            default_policy(&SearchSpace::new(112)).unwrap(),
            Configuration::new(1, 4, 107)
        );
        assert_eq!(
            default_policy(&SearchSpace::simulated_112()).unwrap(),
            Configuration::new(1, 4, 28)
        );
        assert!(default_policy(&SearchSpace::new(1)).is_err());
    }

    #[test]
    fn budget_rules() {
        assert_eq!(TunerBudget::searches_for(726, 0.05), 37);
        assert_eq!(TunerBudget::searches_for(678, 0.06), 41);
        assert_eq!(TunerBudget::searches_for(10, 0.05), 5);
        assert!(TunerBudget::new(5, 4).is_err());
        assert!(TunerBudget::new(0, 4).is_err());
        let b = TunerBudget::default_for(&SearchSpace::simulated_112()).unwrap();
        assert_eq!(b.num_searches, 34);
    }

    #[test]
    fn trace_running_minimum() {
        let c = Configuration::new(1, 1, 1);
        let mut tr = ObservationTrace::new();
        tr.record(c, f64::INFINITY, Phase::Search);
        assert_eq!(tr.best_time(), f64::INFINITY);
        tr.record(c, 4.0, Phase::Search);
        tr.record(c, 6.0, Phase::Search);
        tr.record(c, 2.0, Phase::Reuse);
        let best: Vec<f64> = tr.entries().iter().map(|e| e.best_so_far).collect();
        assert_eq!(best, vec![f64::INFINITY, 4.0, 4.0, 2.0]);
        assert!(tr.is_monotone());
        assert_eq!(tr.best_search_entry().unwrap().epoch_time, 4.0);
    }
}
