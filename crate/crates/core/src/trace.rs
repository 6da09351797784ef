//! JSON-lines trace files.
//!
//! One object per line:
//!
//! ```text
//! {"iter":0,"config":{"n":2,"s":1,"t":3},"epoch_time_s":1.5,"best_so_far_s":1.5,"phase":"search","wall_clock":"2026-01-01T00:00:00Z"}
//! ```
//!
//! Failed evaluations have an infinite epoch time in memory and `null` on disk.

use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config_space::Configuration;
use crate::tuners::{ObservationTrace, Phase, TraceEntry};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub n: u32,
    pub s: u32,
    pub t: u32,
}

impl From<Configuration> for ConfigRecord {
    fn from(c: Configuration) -> Self {
        Self {
            n: c.n_processes,
            s: c.n_sampling_cores,
            t: c.n_training_cores,
        }
    }
}

impl From<ConfigRecord> for Configuration {
    fn from(c: ConfigRecord) -> Self {
        Configuration::new(c.n, c.s, c.t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub config: ConfigRecord,
    pub epoch_time_s: Option<f64>,
    pub best_so_far_s: Option<f64>,
    pub phase: Phase,
    pub wall_clock: String,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl TraceRecord {
    pub fn from_entry(e: &TraceEntry, at: DateTime<Utc>) -> Self {
        Self {
            iter: e.iter,
            config: e.config.into(),
            epoch_time_s: finite(e.epoch_time),
            best_so_far_s: finite(e.best_so_far),
            phase: e.phase,
            wall_clock: at.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        }
    }

    pub fn to_entry(&self) -> TraceEntry {
        TraceEntry {
            iter: self.iter,
            config: self.config.into(),
            epoch_time: self.epoch_time_s.unwrap_or(f64::INFINITY),
            best_so_far: self.best_so_far_s.unwrap_or(f64::INFINITY),
            phase: self.phase,
        }
    }
}

/// Write a trace, stamping every line with the current time.
pub fn write_trace<W: Write>(w: &mut W, trace: &ObservationTrace) -> std::io::Result<()> {
    for e in trace.entries() {
        let rec = TraceRecord::from_entry(e, Utc::now());
        serde_json::to_writer(&mut *w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Parse a trace; blank lines are skipped, line numbers are 1-based.
pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| TraceError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(TraceError::Empty);
    }
    Ok(out)
}

pub fn to_observation_trace(records: &[TraceRecord]) -> ObservationTrace {
    ObservationTrace::from_entries(records.iter().map(TraceRecord::to_entry).collect())
}
