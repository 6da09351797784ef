//! Driver side of the engine. The driver launches the workers, collects
//! their gradients at every step, averages them and broadcasts the result.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::affinity::{available_cores, binding_disabled_by_env};
use super::plan::{plan_workers, WorkerSpec};
use super::sync::weighted_average;
use super::wire::{read_frame, write_frame, Frame, FrameKind};
use super::worker::{worker_main, BindReport, StartMessage, WorkerInit};
use super::EngineError;
use crate::config_space::Configuration;
use crate::gnn::model::ModelParams;
use crate::gnn::train::{EpochMetrics, TrainJob};
use crate::gnn::CsrGraph;
use crate::tuners::{EvaluationTarget, TargetError};

pub const DEFAULT_BARRIER_TIMEOUT: Duration = Duration::from_secs(120);

/// How worker endpoints are created.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Launcher {
    /// Child processes running `<exe> worker`, talking over stdin/stdout.
    Process { exe: PathBuf },
    /// Threads of the current process connected by OS pipes.
    Thread,
}

impl Launcher {
    /// Child processes of the running executable.
    pub fn current_exe() -> Result<Self, EngineError> {
        Ok(Launcher::Process {
            exe: std::env::current_exe().map_err(|e| EngineError::Launch(e.to_string()))?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SessionOptions {
    pub total_cores: u32,
    pub binding: bool,
    pub timeout: Duration,
    /// Fault injection: `(worker, step)`.
    pub crash: Option<(usize, usize)>,
}

impl SessionOptions {
    /// Binding is on unless disabled by environment or the core count is
    /// simulated beyond what the host offers.
    pub fn for_cores(total_cores: u32) -> Self {
        Self {
            total_cores,
            binding: !binding_disabled_by_env() && total_cores <= available_cores(),
            timeout: DEFAULT_BARRIER_TIMEOUT,
            crash: None,
        }
    }
}

enum Event {
    Frame(usize, Frame),
    Closed(usize, String),
}

enum Handle {
    Child(Child),
    Thread(JoinHandle<Result<(), EngineError>>),
}

/// Running workers for one configuration.
pub struct Session {
    cfg: Configuration,
    specs: Vec<WorkerSpec>,
    writers: Vec<Box<dyn Write + Send>>,
    events: Receiver<Event>,
    handles: Vec<Handle>,
    readers: Vec<JoinHandle<()>>,
    bind_reports: Vec<BindReport>,
    timeout: Duration,
    learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochOutcome {
    pub epoch_time: f64,
    pub metrics: EpochMetrics,
    pub per_worker: Vec<EpochMetrics>,
}

fn spawn_reader(i: usize, mut r: Box<dyn Read + Send>, tx: Sender<Event>) -> JoinHandle<()> {
    std::thread::spawn(move || {
        let mut r = std::io::BufReader::new(&mut r);
        loop {
            match read_frame(&mut r) {
                Ok(Some(f)) => {
                    if tx.send(Event::Frame(i, f)).is_err() {
                        return;
                    }
                }
                Ok(None) => {
                    let _ = tx.send(Event::Closed(i, "stream closed".into()));
                    return;
                }
                Err(e) => {
                    let _ = tx.send(Event::Closed(i, e.to_string()));
                    return;
                }
            }
        }
    })
}

impl Session {
    pub fn start(
        launcher: &Launcher,
        job: &TrainJob,
        cfg: Configuration,
        node_count: usize,
        opts: &SessionOptions,
    ) -> Result<Self, EngineError> {
        let specs = plan_workers(&cfg, opts.total_cores, node_count, job.batch_size)?;
        let (tx, rx) = channel();
        let mut session = Session {
            cfg,
            specs: specs.clone(),
            writers: Vec::new(),
            events: rx,
            handles: Vec::new(),
            readers: Vec::new(),
            bind_reports: Vec::new(),
            timeout: opts.timeout,
            learning_rate: job.learning_rate,
        };
        for spec in &specs {
            let (writer, reader, handle) = launch(launcher)?;
            session.writers.push(writer);
            session.handles.push(handle);
            session.readers.push(spawn_reader(spec.worker_id, reader, tx.clone()));
        }
        drop(tx);
        for spec in &specs {
            let init = WorkerInit {
                job: job.clone(),
                spec: spec.clone(),
                binding: opts.binding,
                crash_at_step: opts.crash.filter(|c| c.0 == spec.worker_id).map(|c| c.1),
            };
            session.send(spec.worker_id, &Frame::json(FrameKind::Init, 0, &init))?;
        }
        let ready = session.gather(FrameKind::Ready)?;
        session.bind_reports = ready
            .iter()
            .map(|f| f.parse_json())
            .collect::<Result<_, _>>()?;
        Ok(session)
    }

    pub fn config(&self) -> Configuration {
        self.cfg
    }

    pub fn specs(&self) -> &[WorkerSpec] {
        &self.specs
    }

    pub fn bind_reports(&self) -> &[BindReport] {
        &self.bind_reports
    }

    fn send(&mut self, worker: usize, frame: &Frame) -> Result<(), EngineError> {
        write_frame(&mut self.writers[worker], frame).map_err(|_| EngineError::WorkerCrashed { worker })
    }

    fn broadcast(&mut self, frame: &Frame) -> Result<(), EngineError> {
        for i in 0..self.writers.len() {
            self.send(i, frame)?;
        }
        Ok(())
    }

    /// One frame of `kind` from every worker, indexed by worker id.
    fn gather(&mut self, kind: FrameKind) -> Result<Vec<Frame>, EngineError> {
        let n = self.writers.len();
        let mut slots: Vec<Option<Frame>> = vec![None; n];
        let mut remaining = n;
        let deadline = Instant::now() + self.timeout;
        while remaining > 0 {
            let wait = deadline.saturating_duration_since(Instant::now());
            let event = self.events.recv_timeout(wait).map_err(|e| match e {
                RecvTimeoutError::Timeout => EngineError::Deadlock {
                    seconds: self.timeout.as_secs_f64(),
                },
                RecvTimeoutError::Disconnected => EngineError::Protocol("all workers gone".into()),
            })?;
            match event {
                Event::Closed(worker, why) => {
                    log::warn!("worker {worker} stream closed: {why}");
                    return Err(EngineError::WorkerCrashed { worker });
                }
                Event::Frame(worker, f) if f.kind == FrameKind::Failure => {
                    let message: String = f.parse_json().unwrap_or_else(|_| "unreadable failure".into());
                    return Err(EngineError::WorkerFailed { worker, message });
                }
                Event::Frame(worker, f) if f.kind == kind && slots[worker].is_none() => {
                    slots[worker] = Some(f);
                    remaining -= 1;
                }
                Event::Frame(worker, f) => {
                    return Err(EngineError::Protocol(format!(
                        "worker {worker} sent {:?} while waiting for {kind:?}",
                        f.kind
                    )))
                }
            }
        }
        Ok(slots.into_iter().map(Option::unwrap).collect())
    }

    /// Run one synchronous-SGD epoch, updating `params` with the same steps
    /// the workers apply. The epoch time runs from the start broadcast until
    /// every worker has reported done.
    pub fn run_epoch(&mut self, params: &mut ModelParams, epoch: u64) -> Result<EpochOutcome, EngineError> {
        let steps = self
            .specs
            .first()
            .map_or(0, |s| s.data_partition.node_count.div_ceil(s.data_partition.global_batch));
        let tensors = params.to_tensors();
        self.broadcast(&Frame::tensors(FrameKind::Params, 0, tensors))?;
        let t0 = Instant::now();
        self.broadcast(&Frame::json(FrameKind::Start, 0, &StartMessage { epoch }))?;
        let mut update = params.zeros_like();
        for _ in 0..steps {
            let frames = self.gather(FrameKind::Gradients)?;
            let mut grads = Vec::with_capacity(frames.len());
            let mut counts = Vec::with_capacity(frames.len());
            for f in frames {
                let mut t = f.into_tensors()?;
                let stats = t.pop().ok_or_else(|| EngineError::Protocol("gradient frame without stats".into()))?;
                counts.push(*stats.get(2).unwrap_or(&0.0));
                grads.push(t);
            }
            let total: f64 = counts.iter().sum();
            if total <= 0.0 {
                return Err(EngineError::Protocol("step with no targets".into()));
            }
            let weights: Vec<f64> = counts.iter().map(|c| c / total).collect();
            let avg = weighted_average(&grads, &weights)?;
            update.load_tensors(&avg)?;
            self.broadcast(&Frame::tensors(FrameKind::Averaged, 0, avg))?;
            params.sgd_step(&update, self.learning_rate);
        }
        let done = self.gather(FrameKind::Done)?;
        let epoch_time = t0.elapsed().as_secs_f64();
        let per_worker: Vec<EpochMetrics> = done.iter().map(|f| f.parse_json()).collect::<Result<_, _>>()?;
        let mut metrics = EpochMetrics::default();
        for m in &per_worker {
            metrics.loss_sum += m.loss_sum;
            metrics.correct += m.correct;
            metrics.count += m.count;
        }
        metrics.steps = steps;
        Ok(EpochOutcome {
            epoch_time,
            metrics,
            per_worker,
        })
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let bye = Frame::empty(FrameKind::Shutdown, 0);
        for w in &mut self.writers {
            let _ = write_frame(w, &bye);
        }
        self.writers.clear();
        for h in self.handles.drain(..) {
            match h {
                Handle::Child(mut c) => {
                    let deadline = Instant::now() + Duration::from_secs(5);
                    loop {
                        match c.try_wait() {
                            Ok(Some(_)) | Err(_) => break,
                            Ok(None) if Instant::now() >= deadline => {
                                let _ = c.kill();
                                let _ = c.wait();
                                break;
                            }
                            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
                        }
                    }
                }
                Handle::Thread(t) => {
                    let _ = t.join();
                }
            }
        }
        for r in self.readers.drain(..) {
            let _ = r.join();
        }
    }
}

type Endpoint = (Box<dyn Write + Send>, Box<dyn Read + Send>, Handle);

fn launch(launcher: &Launcher) -> Result<Endpoint, EngineError> {
    match launcher {
        Launcher::Process { exe } => {
            let mut child = Command::new(exe)
                .arg("worker")
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| EngineError::Launch(format!("{}: {e}", exe.display())))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            Ok((Box::new(stdin), Box::new(stdout), Handle::Child(child)))
        }
        Launcher::Thread => {
            let (to_worker_r, to_worker_w) = std::io::pipe()?;
            let (from_worker_r, from_worker_w) = std::io::pipe()?;
            let t = std::thread::spawn(move || worker_main(to_worker_r, from_worker_w));
            Ok((Box::new(to_worker_w), Box::new(from_worker_r), Handle::Thread(t)))
        }
    }
}

/// Launch a session for `cfg`, run one epoch and shut it down.
pub fn run_epoch(
    launcher: &Launcher,
    job: &TrainJob,
    cfg: Configuration,
    params: &mut ModelParams,
    node_count: usize,
    epoch: u64,
    opts: &SessionOptions,
) -> Result<EpochOutcome, EngineError> {
    Session::start(launcher, job, cfg, node_count, opts)?.run_epoch(params, epoch)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub config: Configuration,
    pub epoch: u64,
    pub outcome: EpochOutcome,
}

/// GNN training as an evaluation target: each evaluation trains one real
/// epoch under the requested configuration, continuing from the parameters
/// left by the previous one. Consecutive epochs with the same configuration
/// reuse the running workers.
pub struct GnnTarget {
    launcher: Launcher,
    job: TrainJob,
    options: SessionOptions,
    node_count: usize,
    params: ModelParams,
    epoch: u64,
    session: Option<Session>,
    history: Vec<EpochRecord>,
}

impl GnnTarget {
    pub fn new(launcher: Launcher, job: TrainJob, options: SessionOptions) -> Result<Self, EngineError> {
        job.validate()?;
        let graph: CsrGraph = job.graph.load()?;
        let params = job.init_params(&graph)?;
        Ok(Self {
            launcher,
            node_count: graph.node_count(),
            job,
            options,
            params,
            epoch: 0,
            session: None,
            history: Vec::new(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn session(&self) -> Option<&Session> {
        self.session.as_ref()
    }

    pub fn run_epoch(&mut self, cfg: &Configuration) -> Result<&EpochRecord, EngineError> {
        if self.session.as_ref().is_none_or(|s| s.config() != *cfg) {
            self.session = None;
            self.session = Some(Session::start(&self.launcher, &self.job, *cfg, self.node_count, &self.options)?);
        }
        let session = self.session.as_mut().expect("session just started");
        let result = session.run_epoch(&mut self.params, self.epoch);
        let outcome = match result {
            Ok(o) => o,
            Err(e) => {
                self.session = None;
                return Err(e);
            }
        };
        self.history.push(EpochRecord {
            config: *cfg,
            epoch: self.epoch,
            outcome,
        });
        self.epoch += 1;
        Ok(self.history.last().unwrap())
    }
}

impl EvaluationTarget for GnnTarget {
    fn evaluate(&mut self, cfg: &Configuration) -> Result<f64, TargetError> {
        self.run_epoch(cfg)
            .map(|r| r.outcome.epoch_time)
            .map_err(|e| TargetError::new(e.to_string()))
    }
}
