//! Run configuration: defaults, `key=value` files, command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config_space::SearchSpace;
use crate::engine::available_cores;
use crate::gnn::graph::{GeneratorSpec, GraphKind};
use crate::gnn::{GraphSource, ModelKind, SamplerConfig, SamplerKind, TrainJob};
use crate::landscape::{base_presets, LandscapeParams};
use crate::tuners::TunerBudget;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadKind {
    Gnn,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Bo,
    Sa,
    Exhaustive,
    Default,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Bo => "bo",
            Algo::Sa => "sa",
            Algo::Exhaustive => "exhaustive",
            Algo::Default => "default",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub workload: WorkloadKind,
    /// Edge list; `None` generates an Erdős–Rényi graph of `nodes` nodes.
    pub graph: Option<PathBuf>,
    /// Feature sidecar; defaults to the edge list path with extension `feat`.
    pub features: Option<PathBuf>,
    pub nodes: usize,
    pub model: ModelKind,
    pub sampler: SamplerKind,
    pub fanouts: Option<Vec<usize>>,
    pub batch_size: usize,
    pub epochs: usize,
    pub algo: Algo,
    pub n_search: Option<usize>,
    pub cores: Option<u32>,
    pub max_processes: Option<u32>,
    pub max_sampling: Option<u32>,
    pub max_training: Option<u32>,
    pub seed: u64,
    pub deterministic: bool,
    pub out: Option<PathBuf>,
    pub learning_rate: f64,
    pub hidden: usize,
    pub layers: usize,
    pub preset: String,
    pub noise: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            workload: WorkloadKind::Gnn,
            graph: None,
            features: None,
            nodes: 2000,
            model: ModelKind::Sage,
            sampler: SamplerKind::Neighbor,
            fanouts: None,
            batch_size: 64,
            epochs: 200,
            algo: Algo::Bo,
            n_search: None,
            cores: None,
            max_processes: None,
            max_sampling: None,
            max_training: None,
            seed: 0,
            deterministic: false,
            out: None,
            learning_rate: 0.05,
            hidden: 16,
            layers: 3,
            preset: base_presets()[0].name.clone(),
            noise: 0.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| format!("invalid value {value:?} for {key}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value.trim() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        v => Err(format!("invalid boolean {v:?} for {key}")),
    }
}

pub fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, String> {
    value.split(',').map(|v| parse::<usize>(key, v)).collect()
}

impl RunConfig {
    /// Set one field from its textual form. Keys accept `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "workload" => {
                self.workload = match v {
                    "gnn" => WorkloadKind::Gnn,
                    "synthetic" => WorkloadKind::Synthetic,
                    _ => return Err(format!("unknown workload {v:?} (expected gnn or synthetic)")),
                }
            }
            "graph" => self.graph = Some(PathBuf::from(v)),
            "features" => self.features = Some(PathBuf::from(v)),
            "nodes" => self.nodes = parse(&key, v)?,
            "model" => self.model = v.parse().map_err(|e| format!("{e}"))?,
            "sampler" => self.sampler = v.parse().map_err(|e| format!("{e}"))?,
            "fanouts" => self.fanouts = Some(parse_list(&key, v)?),
            "batch_size" => self.batch_size = parse(&key, v)?,
            "epochs" => self.epochs = parse(&key, v)?,
            "algo" => {
                self.algo = match v {
                    "bo" => Algo::Bo,
                    "sa" => Algo::Sa,
                    "exhaustive" => Algo::Exhaustive,
                    "default" => Algo::Default,
                    _ => return Err(format!("unknown algo {v:?} (expected bo, sa, exhaustive or default)")),
                }
            }
            "n_search" => self.n_search = Some(parse(&key, v)?),
            "cores" => self.cores = Some(parse(&key, v)?),
            "max_processes" => self.max_processes = Some(parse(&key, v)?),
            "max_sampling" => self.max_sampling = Some(parse(&key, v)?),
            "max_training" => self.max_training = Some(parse(&key, v)?),
            "seed" => self.seed = parse(&key, v)?,
            "deterministic" => self.deterministic = parse_bool(&key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            "lr" | "learning_rate" => self.learning_rate = parse(&key, v)?,
            "hidden" => self.hidden = parse(&key, v)?,
            "layers" => self.layers = parse(&key, v)?,
            "preset" => self.preset = v.to_string(),
            "noise" => self.noise = parse(&key, v)?,
            _ => return Err(format!("unknown setting {key:?}")),
        }
        Ok(())
    }

    /// Apply a `key=value` file; blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
            self.set(k, v).map_err(|e| format!("line {}: {e}", i + 1))?;
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        self.apply_text(&text)
    }

    pub fn feature_path(&self) -> Option<PathBuf> {
        self.features
            .clone()
            .or_else(|| self.graph.as_ref().map(|g| g.with_extension("feat")))
    }

    pub fn total_cores(&self) -> u32 {
        match (self.cores, self.workload) {
            (Some(c), _) => c,
            (None, WorkloadKind::Synthetic) => 112,
            (None, WorkloadKind::Gnn) => available_cores(),
        }
    }

    /// The configuration space. A synthetic run with no core count uses the
    /// simulated 112-core space.
    pub fn space(&self) -> SearchSpace {
        let mut space = match (self.cores, self.workload) {
            (None, WorkloadKind::Synthetic) => SearchSpace::simulated_112(),
            _ => SearchSpace::new(self.total_cores()),
        };
        if let Some(m) = self.max_processes {
            space.max_processes = m;
        }
        if self.max_sampling.is_some() {
            space.max_sampling_cores = self.max_sampling;
        }
        if self.max_training.is_some() {
            space.max_training_cores = self.max_training;
        }
        space
    }

    pub fn budget(&self, space_size: usize) -> Result<TunerBudget, String> {
        let n = self
            .n_search
            .unwrap_or_else(|| TunerBudget::searches_for(space_size, 0.05).min(self.epochs.max(1)));
        TunerBudget::new(n, self.epochs).map_err(|e| e.to_string())
    }

    pub fn landscape(&self) -> Result<LandscapeParams, String> {
        let mut p = base_presets()
            .into_iter()
            .find(|p| p.name == self.preset)
            .ok_or_else(|| {
                let names: Vec<String> = base_presets().into_iter().map(|p| p.name).collect();
                format!("unknown preset {:?} (available: {})", self.preset, names.join(", "))
            })?;
        p.noise_std = self.noise;
        p.seed = self.seed;
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }

    pub fn train_job(&self) -> Result<TrainJob, String> {
        let source = match &self.graph {
            Some(edges) => GraphSource::Files {
                edges: edges.clone(),
                features: self.feature_path().expect("graph is set"),
            },
            None => GraphSource::Generated(GeneratorSpec {
                kind: GraphKind::ErdosRenyi,
                nodes: self.nodes,
                param: (10.0 / (self.nodes.max(2) - 1) as f64).min(1.0),
                feature_dim: 16,
                classes: 2,
                seed: self.seed,
            }),
        };
        let mut job = TrainJob::new(source, self.model, self.sampler);
        if let Some(f) = &self.fanouts {
            job.sampler = SamplerConfig {
                kind: self.sampler,
                fanouts: f.clone(),
            };
        }
        job.layers = self.layers;
        job.hidden = self.hidden;
        job.batch_size = self.batch_size;
        job.learning_rate = self.learning_rate;
        job.seed = self.seed;
        job.deterministic = self.deterministic;
        job.validate().map_err(|e| e.to_string())?;
        Ok(job)
    }

    /// Checks that do not depend on the command.
    pub fn validate(&self) -> Result<(), String> {
        if self.epochs == 0 {
            return Err("epochs must be positive".into());
        }
        if let Some(n) = self.n_search {
            if n == 0 {
                return Err("n-search must be positive".into());
            }
            if self.epochs < n {
                return Err(format!("epochs ({}) < n-search ({n})", self.epochs));
            }
        }
        if self.workload == WorkloadKind::Gnn {
            if let Some(g) = &self.graph {
                if !g.is_file() {
                    return Err(format!("graph file {} does not exist", g.display()));
                }
                let f = self.feature_path().expect("graph is set");
                if !f.is_file() {
                    return Err(format!("feature file {} does not exist", f.display()));
                }
            } else if self.nodes < 2 {
                return Err("nodes must be at least 2".into());
            }
            self.train_job()?;
        } else {
            self.landscape()?;
        }
        Ok(())
    }
}
