use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::{Algo, RunConfig, WorkloadKind};
use super::report::{render_csv, render_summary, summarize};
use super::{CliError, GenArgs};
use crate::config_space::{Configuration, SearchSpace};
use crate::engine::{worker_main, GnnTarget, Launcher, SessionOptions};
use crate::gnn::graph::{generate_graph, write_edge_list, write_features, GeneratorSpec, GraphKind};
use crate::landscape::LandscapeTarget;
use crate::trace::{read_trace, write_trace, TraceError};
use crate::tuners::{
    bayes_tune, default_policy, exhaustive_search, fixed_run, simulated_annealing, AnnealSchedule,
    EvaluationTarget, TuneError, TuneOutcome, TunerBudget,
};

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn gnn_target(cfg: &RunConfig) -> Result<GnnTarget, CliError> {
    let job = cfg.train_job().map_err(invalid)?;
    let launcher = Launcher::current_exe().map_err(runtime)?;
    GnnTarget::new(launcher, job, SessionOptions::for_cores(cfg.total_cores())).map_err(runtime)
}

fn run_tuner<T: EvaluationTarget + ?Sized>(
    algo: Algo,
    space: &SearchSpace,
    target: &mut T,
    budget: TunerBudget,
    seed: u64,
) -> Result<TuneOutcome, TuneError> {
    match algo {
        Algo::Bo => bayes_tune(space, target, budget, seed),
        Algo::Sa => simulated_annealing(space, target, budget, seed, AnnealSchedule::default()),
        Algo::Exhaustive => exhaustive_search(space, target),
        Algo::Default => fixed_run(default_policy(space)?, target, budget.total_epochs),
    }
}

fn tune_error(e: TuneError) -> CliError {
    match e {
        TuneError::InvalidBudget(_) | TuneError::Space(_) => invalid(e),
        _ => runtime(e),
    }
}

pub fn tune(cfg: &RunConfig, algo_override: Option<Algo>) -> Result<(), CliError> {
    let algo = algo_override.unwrap_or(cfg.algo);
    let space = cfg.space();
    let size = space.enumerate().map_err(invalid)?.len();
    let budget = cfg.budget(size).map_err(invalid)?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("trace.jsonl"));
    let outcome = match cfg.workload {
        WorkloadKind::Synthetic => {
            let mut target = LandscapeTarget::new(cfg.landscape().map_err(invalid)?);
            run_tuner(algo, &space, &mut target, budget, cfg.seed)
        }
        WorkloadKind::Gnn => {
            let mut target = gnn_target(cfg)?;
            run_tuner(algo, &space, &mut target, budget, cfg.seed)
        }
    }
    .map_err(tune_error)?;
    let mut w = create(&out)?;
    write_trace(&mut w, &outcome.trace).map_err(runtime)?;
    println!(
        "algo {algo}: {} searches, {} epochs, space {size}",
        outcome.trace.search_count(),
        outcome.trace.len()
    );
    println!("best {} epoch_time_s {:.6}", outcome.best, outcome.best_time);
    println!("trace written to {}", out.display());
    Ok(())
}

pub fn parse_fixed(text: &str) -> Result<Configuration, CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(invalid(format!("--fixed expects N,S,T, got {text:?}")));
    }
    let v: Vec<u32> = parts
        .iter()
        .map(|p| p.trim().parse::<u32>().map_err(|e| invalid(format!("--fixed {text:?}: {e}"))))
        .collect::<Result<_, _>>()?;
    Ok(Configuration::new(v[0], v[1], v[2]))
}

pub fn train(cfg: &RunConfig, fixed: &str) -> Result<(), CliError> {
    if cfg.workload != WorkloadKind::Gnn {
        return Err(invalid("train needs the gnn workload"));
    }
    let c = parse_fixed(fixed)?;
    let cores = cfg.total_cores();
    if c.n_processes == 0 || c.n_sampling_cores == 0 || c.n_training_cores == 0 || c.cores_used() > u64::from(cores) {
        return Err(invalid(format!("{c} does not fit in {cores} cores")));
    }
    if (c.n_processes as usize) > cfg.batch_size {
        return Err(invalid(format!("batch size {} < {} processes", cfg.batch_size, c.n_processes)));
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("metrics.csv"));
    let mut target = gnn_target(cfg)?;
    let mut w = create(&out)?;
    writeln!(w, "epoch,loss,accuracy,epoch_time_s").map_err(runtime)?;
    for _ in 0..cfg.epochs {
        let r = target.run_epoch(&c).map_err(runtime)?;
        let m = r.outcome.metrics;
        writeln!(
            w,
            "{},{:.12},{:.6},{:.6}",
            r.epoch,
            m.mean_loss(),
            m.accuracy(),
            r.outcome.epoch_time
        )
        .map_err(runtime)?;
    }
    w.flush().map_err(runtime)?;
    if let Some(last) = target.history().last() {
        println!(
            "trained {} epochs at {c}: loss {:.6} accuracy {:.4}",
            cfg.epochs,
            last.outcome.metrics.mean_loss(),
            last.outcome.metrics.accuracy()
        );
    }
    println!("metrics written to {}", out.display());
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

pub fn bench(cfg: &RunConfig, repeats: usize) -> Result<(), CliError> {
    if cfg.workload != WorkloadKind::Gnn {
        return Err(invalid("bench needs the gnn workload"));
    }
    if repeats == 0 {
        return Err(invalid("repeats must be positive"));
    }
    let space = cfg.space();
    let size = space.enumerate().map_err(invalid)?.len();
    let default_cfg = default_policy(&space).map_err(invalid)?;
    let n_search = cfg.n_search.unwrap_or_else(|| TunerBudget::searches_for(size, 0.05));
    let budget = TunerBudget::new(n_search, n_search + repeats).map_err(invalid)?;

    let mut baseline = gnn_target(cfg)?;
    let mut default_times = Vec::new();
    for _ in 0..repeats {
        default_times.push(baseline.run_epoch(&default_cfg).map_err(runtime)?.outcome.epoch_time);
    }
    drop(baseline);

    let mut tuned_target = gnn_target(cfg)?;
    let outcome = bayes_tune(&space, &mut tuned_target, budget, cfg.seed).map_err(tune_error)?;
    let tuned_times: Vec<f64> = outcome
        .trace
        .entries()
        .iter()
        .filter(|e| e.phase == crate::tuners::Phase::Reuse)
        .map(|e| e.epoch_time)
        .collect();
    let d = mean(&default_times);
    let t = mean(&tuned_times);
    let speedup = d / t;
    let host = crate::engine::available_cores();
    println!("host cores: {host}, space {size}, searches {n_search}");
    println!("default {default_cfg}: mean epoch_time_s {d:.6}");
    println!("tuned {}: mean epoch_time_s {t:.6}", outcome.best);
    println!("throughput ratio: {speedup:.3}");
    if host < 8 {
        println!("note: fewer than 8 cores available; the ratio is informational only");
    }
    if let Some(out) = &cfg.out {
        let json = serde_json::json!({
            "host_cores": host,
            "default": default_cfg.to_string(),
            "default_epoch_time_s": d,
            "tuned": outcome.best.to_string(),
            "tuned_epoch_time_s": t,
            "throughput_ratio": speedup,
        });
        let mut w = create(out)?;
        writeln!(w, "{json}").map_err(runtime)?;
    }
    Ok(())
}

fn load_trace(path: &Path) -> Result<Vec<crate::trace::TraceRecord>, CliError> {
    let f = File::open(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    read_trace(BufReader::new(f)).map_err(|e| match e {
        TraceError::Malformed { line, message } => runtime(format!("{}: line {line}: {message}", path.display())),
        other => runtime(format!("{}: {other}", path.display())),
    })
}

pub fn report(trace: &Path, exhaustive: Option<&Path>, csv: Option<&Path>) -> Result<(), CliError> {
    let records = load_trace(trace)?;
    let ex = exhaustive.map(load_trace).transpose()?;
    let summary = summarize(&records, ex.as_deref());
    print!("{}", render_summary(&summary));
    if let Some(path) = csv {
        let mut w = create(path)?;
        w.write_all(render_csv(&records, summary.exhaustive_best.map(|b| b.1)).as_bytes())
            .map_err(runtime)?;
        w.flush().map_err(runtime)?;
    }
    Ok(())
}

pub fn gen_graph(args: &GenArgs) -> Result<(), CliError> {
    let kind = match args.kind.as_str() {
        "erdos-renyi" | "erdos_renyi" | "er" => GraphKind::ErdosRenyi,
        "preferential-attachment" | "preferential_attachment" | "pa" => GraphKind::PreferentialAttachment,
        k => return Err(invalid(format!("unknown graph kind {k:?}"))),
    };
    let spec = GeneratorSpec {
        kind,
        nodes: args.nodes,
        param: args.param,
        feature_dim: args.feature_dim,
        classes: args.classes,
        seed: args.seed,
    };
    let g = generate_graph(&spec).map_err(invalid)?;
    let edges = args.out.with_extension("edges");
    let feats = args.out.with_extension("feat");
    write_edge_list(create(&edges)?, &g).map_err(runtime)?;
    write_features(create(&feats)?, &g).map_err(runtime)?;
    println!(
        "{} nodes, {} undirected edges -> {}, {}",
        g.node_count(),
        g.edge_count() / 2,
        edges.display(),
        feats.display()
    );
    Ok(())
}

pub fn worker() -> Result<(), CliError> {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    worker_main(stdin.lock(), stdout.lock()).map_err(runtime)
}
