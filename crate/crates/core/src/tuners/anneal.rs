//! Simulated-annealing baseline.
//!
//! Five seeded probe configurations set the initial temperature (the standard
//! deviation of their epoch times) and the starting state (the best probe).
//! Each remaining evaluation proposes a ±1 neighbour and accepts it with the
//! Metropolis rule under geometric cooling. Probes count toward the budget.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{conclude, run_one, EvaluationTarget, ObservationTrace, Phase, TuneError, TuneOutcome, TunerBudget};
use crate::config_space::SearchSpace;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSchedule {
    pub probes: usize,
    pub cooling: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            probes: 5,
            cooling: 0.9,
        }
    }
}

/// Metropolis acceptance probability for an increase `delta` at temperature `temp`.
pub fn acceptance_probability(delta: f64, temp: f64) -> f64 {
    if delta <= 0.0 {
        1.0
    } else if temp <= 0.0 || !delta.is_finite() {
        0.0
    } else {
        (-delta / temp).exp()
    }
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn simulated_annealing<T: EvaluationTarget + ?Sized>(
    space: &SearchSpace,
    target: &mut T,
    budget: TunerBudget,
    seed: u64,
    schedule: AnnealSchedule,
) -> Result<TuneOutcome, TuneError> {
    let all = space.enumerate()?;
    let mut rng = rng::keyed(&[seed, 0x5A]);
    let mut trace = ObservationTrace::new();
    let mut last_error = None;

    let mut probes = all.clone();
    probes.shuffle(&mut rng);
    probes.truncate(schedule.probes.min(budget.num_searches).max(1));

    let mut probe_times = Vec::with_capacity(probes.len());
    for cfg in &probes {
        let t = run_one(target, cfg, &mut last_error);
        trace.record(*cfg, t, Phase::Search);
        probe_times.push(t);
    }
    let finite: Vec<f64> = probe_times.iter().copied().filter(|t| t.is_finite()).collect();
    let mut temperature = sample_std(&finite);
    if temperature <= 0.0 {
        // identical probes: fall back to a small fraction of their level
        temperature = finite.first().map(|t| 0.01 * t).unwrap_or(1.0);
    }

    let (mut current, mut current_time) = probes
        .iter()
        .zip(&probe_times)
        .fold((probes[0], f64::INFINITY), |acc, (c, &t)| if t < acc.1 { (*c, t) } else { acc });

    while trace.len() < budget.num_searches {
        let cand = space.neighbor(&current, &mut rng)?;
        let t = run_one(target, &cand, &mut last_error);
        trace.record(cand, t, Phase::Search);
        let delta = t - current_time;
        let u: f64 = rng.random();
        if current_time.is_infinite() && t.is_finite() || u < acceptance_probability(delta, temperature) {
            current = cand;
            current_time = t;
        }
        temperature *= schedule.cooling;
    }

    if let Some(best) = trace.best_search_entry().map(|e| e.config) {
        while trace.len() < budget.total_epochs {
            let t = run_one(target, &best, &mut last_error);
            trace.record(best, t, Phase::Reuse);
        }
    }
    conclude(trace, last_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::Configuration;
    use crate::landscape::{base_presets, LandscapeTarget};
    use crate::tuners::TargetError;

    #[test]
    fn acceptance_rule() {
        assert_eq!(acceptance_probability(-3.0, 1.0), 1.0);
        assert_eq!(acceptance_probability(0.0, 1e-300), 1.0);
        assert!(acceptance_probability(1.0, 1e-6) < 1e-100);
        assert_eq!(acceptance_probability(1.0, 0.0), 0.0);
        assert_eq!(acceptance_probability(f64::INFINITY, 5.0), 0.0);
        assert!((acceptance_probability(1.0, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn exact_budget_and_monotone() {
        let space = SearchSpace::simulated_112();
        let mut target = LandscapeTarget::new(base_presets().remove(0));
        let out = simulated_annealing(
            &space,
            &mut target,
            TunerBudget::new(41, 41).unwrap(),
            7,
            AnnealSchedule::default(),
        )
        .unwrap();
        assert_eq!(out.trace.len(), 41);
        assert!(out.trace.is_monotone());
        assert!(out.trace.entries().iter().all(|e| space.contains(&e.config)));
    }

    #[test]
    fn deterministic_for_seed() {
        let space = SearchSpace::new(16);
        let run = |seed| {
            let mut t = LandscapeTarget::new(base_presets().remove(4));
            simulated_annealing(&space, &mut t, TunerBudget::new(15, 20).unwrap(), seed, AnnealSchedule::default())
                .unwrap()
                .trace
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn singleton_space() {
        let space = SearchSpace::new(2);
        let mut t = LandscapeTarget::new(base_presets().remove(0));
        let out = simulated_annealing(&space, &mut t, TunerBudget::new(6, 6).unwrap(), 0, AnnealSchedule::default())
            .unwrap();
        assert_eq!(out.best, Configuration::new(1, 1, 1));
        assert_eq!(out.trace.len(), 6);
    }

    #[test]
    fn all_failures_is_an_error() {
        let space = SearchSpace::new(8);
        let mut broken = |_: &Configuration| -> Result<f64, TargetError> { Err(TargetError::new("x")) };
        assert!(simulated_annealing(&space, &mut broken, TunerBudget::new(8, 8).unwrap(), 0, AnnealSchedule::default())
            .is_err());
    }
}
