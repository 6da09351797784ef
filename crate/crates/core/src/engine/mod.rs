//! Multi-process data-parallel engine and core binder.
//!
//! A configuration `(n, s, t)` becomes `n` worker processes. Worker `i` owns
//! cores `[i(s+t), (i+1)(s+t))`, the first `s` for sampling threads and the
//! rest for training threads, plus chunk `i` of every global batch. After
//! each backward pass the driver averages the gradients, weighted by chunk
//! size, and every worker applies the same SGD step.

pub mod affinity;
mod plan;
mod session;
mod sync;
pub mod wire;
mod worker;

use thiserror::Error;

use crate::gnn::WorkloadError;

pub use affinity::{available_cores, bind_thread, BindOutcome, DISABLE_BINDING_ENV};
pub use plan::{check_plan, plan_workers, DataPartition, WorkerSpec};
pub use session::{
    run_epoch, EpochOutcome, EpochRecord, GnnTarget, Launcher, Session, SessionOptions, DEFAULT_BARRIER_TIMEOUT,
};
pub use sync::{sync_gradients, weighted_average};
pub use worker::{bind_cores, worker_main, BindReport, WorkerInit, PIPELINE_DEPTH};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration rejected: {0}")]
    ConfigurationRejected(String),
    #[error("gradient shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("worker {worker} failed: {message}")]
    WorkerFailed { worker: usize, message: String },
    #[error("worker {worker} crashed")]
    WorkerCrashed { worker: usize },
    #[error("barrier timed out after {seconds} s")]
    Deadlock { seconds: f64 },
    #[error("could not launch worker: {0}")]
    Launch(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("injected crash")]
    InjectedCrash,
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
