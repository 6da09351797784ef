//! Online auto-tuning runtime for multi-process mini-batch GNN training.
//!
//! The runtime picks three parallelization parameters (worker processes,
//! sampling cores per process, training cores per process) while training is
//! underway. A Gaussian-process surrogate with Expected Improvement proposes
//! each new configuration, and every observation is a real epoch. After the
//! search budget is spent, the best configuration found is reused for the
//! remaining epochs.
//!
//! Module map:
//!
//! * [`config_space`]: the discrete configuration space.
//! * [`gp`]: Gaussian-process surrogate and acquisition.
//! * [`tuners`]: Bayesian tuner plus exhaustive, annealing and default baselines.
//! * [`landscape`]: deterministic synthetic epoch-time functions.
//! * [`gnn`]: CSR graphs, samplers, GCN/GraphSAGE layers with manual backprop.
//! * [`engine`]: multi-process data-parallel engine and core binder.
//! * [`cli`]: command-line harness, run configuration and trace files.

pub mod cli;
pub mod config_space;
pub mod engine;
pub mod gnn;
pub mod gp;
pub mod landscape;
pub mod rng;
pub mod trace;
pub mod tuners;

pub use config_space::{Configuration, SearchSpace, SpaceError};
pub use gp::{GpSurrogate, HyperPolicy, KernelParams, Prediction, SurrogateError};
pub use landscape::LandscapeParams;
pub use tuners::{EvaluationTarget, ObservationTrace, Phase, TuneError, TuneOutcome, TunerBudget};
