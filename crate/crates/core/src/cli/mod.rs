//! Command-line harness.
//!
//! Exit codes: 0 on success, 2 for invalid input, 1 for runtime failures.

mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Algo, RunConfig, WorkloadKind};

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Invalid(m) | CliError::Runtime(m) => m,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "autotune", version, about = "Online auto-tuning for multi-process GNN training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tune the configuration while training; writes a JSON-lines trace.
    Tune(RunArgs),
    /// Evaluate every configuration once.
    Search(RunArgs),
    /// Train at a fixed configuration; writes per-epoch CSV metrics.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Configuration as N,S,T.
        #[arg(long)]
        fixed: String,
    },
    /// Compare the tuned configuration against the default policy.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        /// Epochs measured for each side.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Summarize a trace, optionally against an exhaustive trace.
    Report {
        trace: PathBuf,
        #[arg(long)]
        exhaustive: Option<PathBuf>,
        /// Write a per-line CSV dump here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate a synthetic graph: `<out>.edges` and `<out>.feat`.
    GenGraph(GenArgs),
    #[command(hide = true)]
    Worker,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// key=value run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// gnn or synthetic.
    #[arg(long)]
    workload: Option<String>,
    /// Edge list file; omit to generate a graph.
    #[arg(long)]
    graph: Option<String>,
    #[arg(long)]
    features: Option<String>,
    /// Node count of the generated graph.
    #[arg(long)]
    nodes: Option<String>,
    /// gcn or sage.
    #[arg(long)]
    model: Option<String>,
    /// neighbor or shadow.
    #[arg(long)]
    sampler: Option<String>,
    /// Comma-separated fanouts, input layer first.
    #[arg(long)]
    fanouts: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    /// bo, sa, exhaustive or default.
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    n_search: Option<String>,
    /// Total cores; above the host count, binding is disabled.
    #[arg(long)]
    cores: Option<String>,
    #[arg(long)]
    max_processes: Option<String>,
    #[arg(long)]
    max_sampling: Option<String>,
    #[arg(long)]
    max_training: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Sample independently of the process layout.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    /// Landscape preset for the synthetic workload.
    #[arg(long)]
    preset: Option<String>,
    /// Noise std of the synthetic workload, seconds.
    #[arg(long)]
    noise: Option<String>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.load_file(path).map_err(CliError::Invalid)?;
        }
        let flags = [
            ("workload", &self.workload),
            ("graph", &self.graph),
            ("features", &self.features),
            ("nodes", &self.nodes),
            ("model", &self.model),
            ("sampler", &self.sampler),
            ("fanouts", &self.fanouts),
            ("batch_size", &self.batch_size),
            ("epochs", &self.epochs),
            ("algo", &self.algo),
            ("n_search", &self.n_search),
            ("cores", &self.cores),
            ("max_processes", &self.max_processes),
            ("max_sampling", &self.max_sampling),
            ("max_training", &self.max_training),
            ("seed", &self.seed),
            ("out", &self.out),
            ("lr", &self.lr),
            ("hidden", &self.hidden),
            ("layers", &self.layers),
            ("preset", &self.preset),
            ("noise", &self.noise),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v).map_err(CliError::Invalid)?;
            }
        }
        if self.deterministic {
            cfg.deterministic = true;
        }
        cfg.validate().map_err(CliError::Invalid)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// erdos-renyi (er) or preferential-attachment (pa).
    #[arg(long, default_value = "erdos-renyi")]
    kind: String,
    #[arg(long, default_value_t = 1000)]
    nodes: usize,
    /// Edge probability (ER) or edges per new node (PA).
    #[arg(long, default_value_t = 0.01)]
    param: f64,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix.
    #[arg(long)]
    out: PathBuf,
}

/// Parse arguments, run the command, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Tune(a) => a.resolve().and_then(|c| commands::tune(&c, None)),
        Command::Search(a) => a.resolve().and_then(|c| commands::tune(&c, Some(Algo::Exhaustive))),
        Command::Train { run, fixed } => run.resolve().and_then(|c| commands::train(&c, &fixed)),
        Command::Bench { run, repeats } => run.resolve().and_then(|c| commands::bench(&c, repeats)),
        Command::Report { trace, exhaustive, csv } => {
            commands::report(&trace, exhaustive.as_deref(), csv.as_deref())
        }
        Command::GenGraph(g) => commands::gen_graph(&g),
        Command::Worker => commands::worker(),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
