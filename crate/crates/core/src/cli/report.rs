//! Trace summaries and CSV dumps.

use std::fmt::Write as _;

use crate::config_space::Configuration;
use crate::trace::TraceRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub evaluations: usize,
    pub searches: usize,
    pub best: Option<(Configuration, f64)>,
    /// Exhaustive best divided by this trace's best.
    pub ratio: Option<f64>,
    pub exhaustive_best: Option<(Configuration, f64)>,
}

fn best_of(records: &[TraceRecord]) -> Option<(Configuration, f64)> {
    let mut best: Option<(Configuration, f64)> = None;
    for r in records {
        if let Some(t) = r.epoch_time_s {
            if best.is_none_or(|(_, b)| t < b) {
                best = Some((r.config.into(), t));
            }
        }
    }
    best
}

pub fn summarize(records: &[TraceRecord], exhaustive: Option<&[TraceRecord]>) -> Summary {
    let best = best_of(records);
    let exhaustive_best = exhaustive.and_then(best_of);
    let ratio = match (best, exhaustive_best) {
        (Some((_, b)), Some((_, e))) => Some(e / b),
        _ => None,
    };
    Summary {
        evaluations: records.len(),
        searches: records.iter().filter(|r| r.phase == crate::tuners::Phase::Search).count(),
        best,
        ratio,
        exhaustive_best,
    }
}

pub fn render_summary(s: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "evaluations: {}", s.evaluations);
    let _ = writeln!(out, "searches: {}", s.searches);
    match s.best {
        Some((c, t)) => {
            let _ = writeln!(out, "best: {c} epoch_time_s {t:.6}");
        }
        None => {
            let _ = writeln!(out, "best: none (every evaluation failed)");
        }
    }
    if let Some((c, t)) = s.exhaustive_best {
        let _ = writeln!(out, "exhaustive best: {c} epoch_time_s {t:.6}");
    }
    if let Some(r) = s.ratio {
        let _ = writeln!(out, "ratio: {r:.4}");
    }
    out
}

/// One row per trace line. `ratio` is the reference time (exhaustive best,
/// or this trace's own best) over the running best.
pub fn render_csv(records: &[TraceRecord], reference: Option<f64>) -> String {
    let reference = reference.or_else(|| best_of(records).map(|b| b.1));
    let mut out = String::from("iter,n,s,t,phase,epoch_time_s,best_so_far_s,ratio\n");
    let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in records {
        let ratio = match (reference, r.best_so_far_s) {
            (Some(e), Some(b)) => format!("{:.6}", e / b),
            _ => String::new(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.iter,
            r.config.n,
            r.config.s,
            r.config.t,
            r.phase,
            fmt(r.epoch_time_s),
            fmt(r.best_so_far_s),
            ratio
        );
    }
    out
}
