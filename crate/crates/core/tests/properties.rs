mod common;

use std::collections::HashSet;

use proptest::prelude::*;

use autotune::config_space::{Configuration, SearchSpace};
use autotune::engine::{check_plan, plan_workers, weighted_average};
use autotune::engine::wire::{read_frame, write_frame, Frame, FrameKind};
use autotune::gnn::sampler::{neighbor_sample, shadow_sample};
use autotune::gnn::train::{chunk_range, epoch_permutation};
use autotune::gnn::workload::measure_workload;
use autotune::gp::{expected_improvement_from, suggest_next, GpSurrogate, HyperPolicy};
use autotune::landscape::{random_params, LandscapeTarget};
use autotune::trace::{read_trace, to_observation_trace, write_trace};
use autotune::tuners::{acceptance_probability, bayes_tune, simulated_annealing, AnnealSchedule, Phase, TunerBudget};
use common::random_graph;

fn small_space() -> impl Strategy<Value = SearchSpace> {
    (2u32..24, 1u32..8).prop_map(|(cores, maxp)| SearchSpace::with_caps(cores, maxp, None, None))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn neighbor_moves_one_step(space in small_space(), pick in any::<prop::sample::Index>(), seed in any::<u64>()) {
        let all = space.enumerate().unwrap();
        prop_assume!(!all.is_empty());
        let cfg = all[pick.index(all.len())];
        let mut rng = autotune::rng::keyed(&[seed]);
        let next = space.neighbor(&cfg, &mut rng).unwrap();
        prop_assert!(space.contains(&next));
        let a = cfg.as_array();
        let b = next.as_array();
        let diff: u32 = a.iter().zip(&b).map(|(x, y)| x.abs_diff(*y)).sum();
        prop_assert!(diff == 1 || (diff == 0 && all.len() == 1));
    }

    #[test]
    fn normalized_points_lie_in_unit_cube(space in small_space()) {
        for cfg in space.enumerate().unwrap() {
            for x in space.normalize(&cfg).unwrap() {
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }
    }

    #[test]
    fn expected_improvement_is_nonnegative(mean in -5.0f64..5.0, std in 0.0f64..3.0, best in -5.0f64..5.0, xi in 0.0f64..0.1) {
        let ei = expected_improvement_from(mean, std, best, xi);
        prop_assert!(ei >= 0.0 && ei.is_finite());
    }

    #[test]
    fn suggestion_is_never_evaluated(seed in any::<u64>(), k in 2usize..20) {
        let space = SearchSpace::with_caps(12, 4, None, None);
        let params = random_params(&mut autotune::rng::keyed(&[seed]), "p");
        let all = space.enumerate().unwrap();
        let chosen: Vec<Configuration> = all.iter().copied().step_by(1 + seed as usize % 3).take(k).collect();
        prop_assume!(chosen.len() >= 2 && chosen.len() < all.len());
        let inputs: Vec<[f64; 3]> = chosen.iter().map(|c| space.normalize(c).unwrap()).collect();
        let targets: Vec<f64> = chosen.iter().map(|c| params.mean_time(c)).collect();
        let model = GpSurrogate::fit(&inputs, &targets, HyperPolicy::MaximizeLikelihood).unwrap();
        let evaluated: HashSet<Configuration> = chosen.into_iter().collect();
        let next = suggest_next(&model, &space, &evaluated).unwrap();
        prop_assert!(!evaluated.contains(&next));
        prop_assert!(space.contains(&next));
    }

    #[test]
    fn tuner_traces_are_well_formed(seed in any::<u64>(), searches in 5usize..25, reuse in 0usize..10) {
        let space = SearchSpace::with_caps(16, 4, None, None);
        let mut params = random_params(&mut autotune::rng::keyed(&[seed, 1]), "p");
        params.noise_std = 1.0;
        let budget = TunerBudget::new(searches, searches + reuse).unwrap();
        let bo = bayes_tune(&space, &mut LandscapeTarget::new(params.clone()), budget, seed).unwrap();
        let sa = simulated_annealing(&space, &mut LandscapeTarget::new(params), budget, seed, AnnealSchedule::default()).unwrap();
        for o in [&bo, &sa] {
            let entries = o.trace.entries();
            prop_assert_eq!(entries.len(), searches + reuse);
            prop_assert!(o.trace.is_monotone());
            prop_assert_eq!(o.trace.search_count(), searches);
            prop_assert!(entries.iter().all(|e| space.contains(&e.config)));
            let min = entries.iter().filter(|e| e.phase == Phase::Search).map(|e| e.epoch_time).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(o.best_time, min);
            prop_assert!(entries.iter().filter(|e| e.phase == Phase::Reuse).all(|e| e.config == o.best));
        }
        let mut seen = HashSet::new();
        prop_assert!(bo.trace.entries().iter().filter(|e| e.phase == Phase::Search).all(|e| seen.insert(e.config)));
    }

    #[test]
    fn acceptance_probability_is_a_probability(delta in -10.0f64..10.0, temp in 0.0f64..10.0) {
        let p = acceptance_probability(delta, temp);
        prop_assert!((0.0..=1.0).contains(&p));
        if delta <= 0.0 {
            prop_assert_eq!(p, 1.0);
        }
    }

    #[test]
    fn landscape_times_are_finite_and_positive(seed in any::<u64>(), space in small_space()) {
        let params = random_params(&mut autotune::rng::keyed(&[seed]), "p");
        for cfg in space.enumerate().unwrap() {
            let t = params.evaluate(&cfg, seed);
            prop_assert!(t.is_finite() && t > 0.0);
        }
    }

    #[test]
    fn plans_are_disjoint_and_cover_the_batch(space in small_space(), batch in 8usize..100) {
        let total = space.total_cores;
        for cfg in space.enumerate().unwrap() {
            prop_assume!(cfg.n_processes as usize <= batch);
            let specs = plan_workers(&cfg, total, 500, batch).unwrap();
            prop_assert!(check_plan(&specs, &cfg, total, batch).is_ok());
            let perm = epoch_permutation(500, 1, 0);
            let mut covered: Vec<u32> = specs.iter().flat_map(|s| s.data_partition.node_ids(&perm)).collect();
            prop_assert_eq!(covered.len(), specs.iter().map(|s| s.data_partition.len()).sum::<usize>());
            covered.sort();
            prop_assert_eq!(covered, (0..500).collect::<Vec<u32>>());
        }
    }

    #[test]
    fn chunks_partition_the_range(len in 0usize..200, n in 1usize..20) {
        let mut next = 0;
        for i in 0..n {
            let r = chunk_range(len, n, i);
            prop_assert_eq!(r.start, next);
            prop_assert!(r.len() == len / n || r.len() == len / n + 1);
            next = r.end;
        }
        prop_assert_eq!(next, len);
    }

    #[test]
    fn averaging_identical_gradients_is_identity(g in prop::collection::vec(-1e3f64..1e3, 1..20), n in 1usize..9) {
        let grads = vec![vec![g.clone()]; n];
        let avg = weighted_average(&grads, &vec![1.0 / n as f64; n]).unwrap();
        for (a, b) in avg[0].iter().zip(&g) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn frames_round_trip(worker in any::<u32>(), t in prop::collection::vec(prop::collection::vec(any::<f64>(), 0..10), 0..5)) {
        let frame = Frame::tensors(FrameKind::Gradients, worker, t);
        let mut bytes = Vec::new();
        write_frame(&mut bytes, &frame).unwrap();
        let back = read_frame(&mut bytes.as_slice()).unwrap().unwrap();
        prop_assert_eq!(back.worker, worker);
        prop_assert_eq!(back.kind, FrameKind::Gradients);
        let a = frame.into_tensors().unwrap();
        let b = back.into_tensors().unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn trace_files_round_trip(seed in any::<u64>(), searches in 5usize..15) {
        let space = SearchSpace::with_caps(10, 3, None, None);
        let params = random_params(&mut autotune::rng::keyed(&[seed, 2]), "p");
        let out = bayes_tune(&space, &mut LandscapeTarget::new(params), TunerBudget::new(searches, searches + 3).unwrap(), seed).unwrap();
        let mut buf = Vec::new();
        write_trace(&mut buf, &out.trace).unwrap();
        let records = read_trace(buf.as_slice()).unwrap();
        prop_assert_eq!(to_observation_trace(&records), out.trace);
    }

    #[test]
    fn graphs_and_samples_keep_invariants(seed in any::<u64>(), nodes in 2usize..60, p in 0.0f64..0.3, fanout in 1usize..6) {
        let g = random_graph(nodes, p, 2, 2, seed);
        prop_assert!(g.check_invariants().is_ok());
        for v in 0..nodes as u32 {
            prop_assert!(!g.neighbors(v).contains(&v));
            for &u in g.neighbors(v) {
                prop_assert!(g.neighbors(u).contains(&v));
            }
        }
        let targets: Vec<u32> = (0..nodes as u32).step_by(3).collect();
        let sub = neighbor_sample(&g, &targets, &[fanout, fanout + 1], seed).unwrap();
        prop_assert!(sub.check_invariants().is_ok());
        let sub = shadow_sample(&g, &targets, &[fanout, 2], 2, seed).unwrap();
        prop_assert!(sub.check_invariants().is_ok());
    }

    #[test]
    fn splitting_never_reduces_workload(seed in any::<u64>(), nodes in 10usize..80, p in 0.0f64..0.2, n in 1usize..9, layers in 1usize..4) {
        let g = random_graph(nodes, p, 1, 2, seed);
        let batch: Vec<u32> = epoch_permutation(nodes, seed, 0).into_iter().take(nodes.min(24)).collect();
        let w = measure_workload(&g, &batch, n, layers).unwrap();
        prop_assert!(w.edges_split_total >= w.edges_unsplit);
        if n == 1 {
            prop_assert_eq!(w.edges_split_total, w.edges_unsplit);
        }
    }
}
