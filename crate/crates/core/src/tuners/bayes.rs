//! Online Bayesian tuning.
//!
//! The first [`K_INIT`] configurations are drawn uniformly without
//! replacement. After that, every epoch refits the surrogate on all successful
//! observations and evaluates the unevaluated configuration with the highest
//! Expected Improvement. Once `num_searches` epochs have been spent (or the
//! space is exhausted), the best configuration is reused until
//! `total_epochs` is reached.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{conclude, run_one, EvaluationTarget, ObservationTrace, Phase, TuneError, TuneOutcome, TunerBudget};
use crate::config_space::{Configuration, SearchSpace};
use crate::gp::{self, GpSurrogate, HyperPolicy, DEFAULT_XI};
use crate::rng;

/// Random configurations evaluated before the first surrogate fit.
pub const K_INIT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesOptions {
    pub k_init: usize,
    pub xi: f64,
    pub policy: HyperPolicy,
}

impl Default for BayesOptions {
    fn default() -> Self {
        Self {
            k_init: K_INIT,
            xi: DEFAULT_XI,
            policy: HyperPolicy::MaximizeLikelihood,
        }
    }
}

pub fn bayes_tune<T: EvaluationTarget + ?Sized>(
    space: &SearchSpace,
    target: &mut T,
    budget: TunerBudget,
    seed: u64,
) -> Result<TuneOutcome, TuneError> {
    bayes_tune_with(space, target, budget, seed, BayesOptions::default())
}

pub fn bayes_tune_with<T: EvaluationTarget + ?Sized>(
    space: &SearchSpace,
    target: &mut T,
    budget: TunerBudget,
    seed: u64,
    opts: BayesOptions,
) -> Result<TuneOutcome, TuneError> {
    let all = space.enumerate()?;
    let mut rng = rng::keyed(&[seed, 0xB0]);

    let mut init = all.clone();
    init.shuffle(&mut rng);
    init.truncate(opts.k_init.min(budget.num_searches));

    let mut trace = ObservationTrace::new();
    let mut evaluated: HashSet<Configuration> = HashSet::new();
    let mut xs: Vec<[f64; 3]> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut last_error = None;

    for i in 0..budget.num_searches {
        if evaluated.len() == all.len() {
            break;
        }
        let cfg = if i < init.len() {
            init[i]
        } else if ys.len() >= 2 {
            let model = GpSurrogate::fit(&xs, &ys, opts.policy)?;
            gp::suggest_next_with(&model, space, &evaluated, opts.xi)?
        } else {
            // too few successful observations for a surrogate
            let remaining: Vec<&Configuration> =
                all.iter().filter(|c| !evaluated.contains(c)).collect();
            *remaining[rng.random_range(0..remaining.len())]
        };
        let t = run_one(target, &cfg, &mut last_error);
        evaluated.insert(cfg);
        if t.is_finite() {
            xs.push(space.normalize(&cfg)?);
            ys.push(t);
        }
        trace.record(cfg, t, Phase::Search);
    }

    let Some(best) = trace.best_search_entry().map(|e| e.config) else {
        return conclude(trace, last_error);
    };
    while trace.len() < budget.total_epochs {
        let t = run_one(target, &best, &mut last_error);
        trace.record(best, t, Phase::Reuse);
    }
    conclude(trace, last_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{base_presets, LandscapeTarget};
    use crate::tuners::{exhaustive_search, TargetError};

    #[test]
    fn full_budget_matches_exhaustive() {
        let space = SearchSpace::with_caps(10, 3, None, None);
        let n = space.len();
        let p = base_presets().remove(1);
        let bo = bayes_tune(&space, &mut LandscapeTarget::new(p.clone()), TunerBudget::new(n, n).unwrap(), 3)
            .unwrap();
        let ex = exhaustive_search(&space, &mut LandscapeTarget::new(p)).unwrap();
        assert_eq!(bo.best_time, ex.best_time);
        assert_eq!(bo.best, ex.best);
    }

    #[test]
    fn singleton_space_reuses_for_all_epochs() {
        let space = SearchSpace::new(2);
        let mut target = LandscapeTarget::new(base_presets().remove(0));
        let out = bayes_tune(&space, &mut target, TunerBudget::new(5, 12).unwrap(), 0).unwrap();
        assert_eq!(out.best, Configuration::new(1, 1, 1));
        assert_eq!(out.trace.len(), 12);
        assert_eq!(out.trace.search_count(), 1);
    }

    #[test]
    fn never_repeats_in_search_phase_and_reuses_best() {
        let space = SearchSpace::with_caps(32, 6, None, None);
        let mut target = LandscapeTarget::new(base_presets().remove(2));
        let out = bayes_tune(&space, &mut target, TunerBudget::new(20, 30).unwrap(), 9).unwrap();
        let searched: Vec<_> = out
            .trace
            .entries()
            .iter()
            .filter(|e| e.phase == Phase::Search)
            .map(|e| e.config)
            .collect();
        assert_eq!(searched.len(), 20);
        let unique: HashSet<_> = searched.iter().collect();
        assert_eq!(unique.len(), searched.len());
        assert!(out
            .trace
            .entries()
            .iter()
            .filter(|e| e.phase == Phase::Reuse)
            .all(|e| e.config == out.best));
        assert!(out.trace.is_monotone());
    }

    #[test]
    fn traces_are_bit_identical_for_a_seed() {
        let space = SearchSpace::with_caps(24, 6, None, None);
        let run = || {
            let mut t = LandscapeTarget::new(base_presets().remove(3));
            bayes_tune(&space, &mut t, TunerBudget::new(12, 12).unwrap(), 42).unwrap().trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn failed_observations_are_excluded_and_all_fail_is_an_error() {
        let space = SearchSpace::with_caps(16, 4, None, None);
        let mut flaky = |c: &Configuration| {
            if c.n_training_cores.is_multiple_of(2) {
                Err(TargetError::new("odd failure"))
            } else {
                Ok(10.0 / f64::from(c.n_processes) + f64::from(c.n_training_cores))
            }
        };
        let out = bayes_tune(&space, &mut flaky, TunerBudget::new(15, 15).unwrap(), 1).unwrap();
        assert!(out.best.n_training_cores % 2 == 1);
        assert!(out.trace.is_monotone());

        let mut broken = |_: &Configuration| -> Result<f64, TargetError> { Err(TargetError::new("x")) };
        assert!(matches!(
            bayes_tune(&space, &mut broken, TunerBudget::new(6, 6).unwrap(), 1),
            Err(TuneError::AllEvaluationsFailed(_))
        ));
    }
}
