use std::path::PathBuf;

use autotune::config_space::Configuration;
use autotune::engine::{run_epoch, EngineError, GnnTarget, Launcher, Session, SessionOptions};
use autotune::gnn::train::train_epoch_reference;
use autotune::gnn::{ModelKind, ModelParams, SamplerKind, TrainJob};

fn process_launcher() -> Launcher {
    Launcher::Process {
        exe: PathBuf::from(env!("CARGO_BIN_EXE_autotune")),
    }
}

fn options(cores: u32) -> SessionOptions {
    let mut o = SessionOptions::for_cores(cores);
    o.binding = false;
    o
}

fn max_rel_diff(a: &ModelParams, b: &ModelParams) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, y) in a.to_tensors().iter().zip(b.to_tensors()) {
        for (p, q) in x.iter().zip(&y) {
            worst = worst.max((p - q).abs() / p.abs().max(q.abs()).max(1e-12));
        }
    }
    worst
}

fn train(launcher: &Launcher, job: &TrainJob, cfg: Configuration, epochs: u64) -> (ModelParams, Vec<f64>) {
    let g = job.graph.load().unwrap();
    let mut params = job.init_params(&g).unwrap();
    let mut session = Session::start(launcher, job, cfg, g.node_count(), &options(16)).unwrap();
    let mut losses = Vec::new();
    for e in 0..epochs {
        losses.push(session.run_epoch(&mut params, e).unwrap().metrics.mean_loss());
    }
    (params, losses)
}

#[test]
fn single_process_matches_reference_bitwise() {
    for (model, sampler) in [(ModelKind::Sage, SamplerKind::Neighbor), (ModelKind::Gcn, SamplerKind::Shadow)] {
        let job = TrainJob::synthetic(300, model, sampler, 4);
        let g = job.graph.load().unwrap();
        let mut reference = job.init_params(&g).unwrap();
        let mut ref_losses = Vec::new();
        for e in 0..3 {
            ref_losses.push(train_epoch_reference(&g, &mut reference, &job, e).unwrap().mean_loss());
        }
        let (params, losses) = train(&Launcher::Thread, &job, Configuration::new(1, 1, 1), 3);
        assert_eq!(params, reference);
        assert_eq!(losses, ref_losses);
    }
}

#[test]
fn process_count_invariance_threads() {
    let job = TrainJob::synthetic(400, ModelKind::Sage, SamplerKind::Neighbor, 9);
    let (base, base_losses) = train(&Launcher::Thread, &job, Configuration::new(1, 1, 1), 3);
    for n in [2, 4] {
        let (p, losses) = train(&Launcher::Thread, &job, Configuration::new(n, 1, 1), 3);
        assert!(max_rel_diff(&base, &p) < 1e-9, "n={n}: {}", max_rel_diff(&base, &p));
        for (a, b) in base_losses.iter().zip(&losses) {
            assert!((a - b).abs() <= 1e-9 * a.abs(), "n={n}: {a} vs {b}");
        }
    }
}

#[test]
fn process_count_invariance_processes() {
    let job = TrainJob::synthetic(300, ModelKind::Gcn, SamplerKind::Shadow, 2);
    let (base, _) = train(&Launcher::Thread, &job, Configuration::new(1, 1, 1), 2);
    for n in [2, 3] {
        let (p, _) = train(&process_launcher(), &job, Configuration::new(n, 1, 2), 2);
        assert!(max_rel_diff(&base, &p) < 1e-9, "n={n}: {}", max_rel_diff(&base, &p));
    }
}

#[test]
fn metrics_cover_every_node_once() {
    let job = TrainJob::synthetic(250, ModelKind::Sage, SamplerKind::Neighbor, 1);
    let g = job.graph.load().unwrap();
    let mut params = job.init_params(&g).unwrap();
    let out = run_epoch(&Launcher::Thread, &job, Configuration::new(3, 1, 1), &mut params, 250, 0, &options(8)).unwrap();
    assert_eq!(out.metrics.count, 250);
    assert_eq!(out.per_worker.len(), 3);
    assert_eq!(out.per_worker.iter().map(|m| m.count).sum::<usize>(), 250);
    assert!(out.epoch_time > 0.0);
}

#[test]
fn crashed_worker_is_reported_by_id() {
    let job = TrainJob::synthetic(200, ModelKind::Sage, SamplerKind::Neighbor, 0);
    for launcher in [Launcher::Thread, process_launcher()] {
        let g = job.graph.load().unwrap();
        let mut params = job.init_params(&g).unwrap();
        let mut opts = options(8);
        opts.crash = Some((1, 1));
        let err = run_epoch(&launcher, &job, Configuration::new(2, 1, 1), &mut params, 200, 0, &opts).unwrap_err();
        assert!(matches!(err, EngineError::WorkerCrashed { worker: 1 }), "{launcher:?}: {err}");
    }
}

#[test]
fn oversized_configuration_is_rejected() {
    let job = TrainJob::synthetic(100, ModelKind::Sage, SamplerKind::Neighbor, 0);
    let err = match Session::start(&Launcher::Thread, &job, Configuration::new(3, 2, 2), 100, &options(8)) {
        Ok(_) => panic!("(3, 2, 2) accepted on 8 cores"),
        Err(e) => e,
    };
    assert!(matches!(err, EngineError::ConfigurationRejected(_)), "{err}");
}

#[test]
fn gnn_target_reuses_session_and_continues_training() {
    let job = TrainJob::synthetic(200, ModelKind::Sage, SamplerKind::Neighbor, 5);
    let mut target = GnnTarget::new(Launcher::Thread, job.clone(), options(8)).unwrap();
    let a = Configuration::new(1, 1, 1);
    let b = Configuration::new(2, 1, 1);
    for cfg in [a, a, b, a] {
        target.run_epoch(&cfg).unwrap();
    }
    let epochs: Vec<u64> = target.history().iter().map(|r| r.epoch).collect();
    assert_eq!(epochs, vec![0, 1, 2, 3]);

    let g = job.graph.load().unwrap();
    let mut reference = job.init_params(&g).unwrap();
    for e in 0..4 {
        train_epoch_reference(&g, &mut reference, &job, e).unwrap();
    }
    assert!(max_rel_diff(target.params(), &reference) < 1e-9);
}

#[test]
fn bind_reports_are_returned_per_worker() {
    let job = TrainJob::synthetic(100, ModelKind::Sage, SamplerKind::Neighbor, 0);
    let session = Session::start(&Launcher::Thread, &job, Configuration::new(2, 1, 1), 100, &options(4)).unwrap();
    assert_eq!(session.bind_reports().len(), 2);
    assert_eq!(session.specs().len(), 2);
}
