//! CPU affinity: binding threads to cores and reading the masks back.
//!
//! Core index `i` of a plan maps to the `i`-th CPU of the process's allowed
//! set, so plans stay valid inside containers with a restricted cpuset.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// Environment variable that forces unbound mode.
pub const DISABLE_BINDING_ENV: &str = "AUTOTUNE_DISABLE_BINDING";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindOutcome {
    Applied,
    Unsupported(String),
}

impl BindOutcome {
    pub fn is_applied(&self) -> bool {
        matches!(self, BindOutcome::Applied)
    }
}

pub fn binding_disabled_by_env() -> bool {
    std::env::var(DISABLE_BINDING_ENV).is_ok_and(|v| v == "1")
}

/// CPUs the process may run on, captured on first use.
pub fn allowed_cpus() -> &'static [usize] {
    static ALLOWED: OnceLock<Vec<usize>> = OnceLock::new();
    ALLOWED.get_or_init(|| current_thread_mask().unwrap_or_default())
}

/// Host CPU count usable by this process.
pub fn available_cores() -> u32 {
    let n = allowed_cpus().len();
    if n > 0 {
        n as u32
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get() as u32)
    }
}

/// OS CPU ids for plan core indices, or `None` if some index has no CPU.
pub fn map_cores(core_ids: &[u32]) -> Option<Vec<usize>> {
    let allowed = allowed_cpus();
    core_ids.iter().map(|&c| allowed.get(c as usize).copied()).collect()
}

/// Restrict the calling thread to the given plan cores. Never fatal: on
/// failure the thread stays unbound and a warning is logged.
pub fn bind_thread(core_ids: &[u32]) -> BindOutcome {
    let Some(cpus) = map_cores(core_ids) else {
        let msg = format!(
            "cores {core_ids:?} exceed the {} allowed CPUs",
            allowed_cpus().len()
        );
        log::warn!("binding skipped: {msg}");
        return BindOutcome::Unsupported(msg);
    };
    match set_thread_mask(&cpus) {
        Ok(()) => BindOutcome::Applied,
        Err(e) => {
            log::warn!("binding to {cpus:?} failed, running unbound: {e}");
            BindOutcome::Unsupported(e.to_string())
        }
    }
}

#[cfg(target_os = "linux")]
pub fn current_thread_mask() -> Option<Vec<usize>> {
    // SAFETY: cpu_set_t is plain data; the size passed matches the buffer.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        if libc::sched_getaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &mut set) != 0 {
            return None;
        }
        Some(
            (0..libc::CPU_SETSIZE as usize)
                .filter(|&c| libc::CPU_ISSET(c, &set))
                .collect(),
        )
    }
}

#[cfg(target_os = "linux")]
fn set_thread_mask(cpus: &[usize]) -> std::io::Result<()> {
    if cpus.is_empty() {
        return Err(std::io::Error::other("empty CPU set"));
    }
    // SAFETY: as above; CPU_SET is only called with ids below CPU_SETSIZE.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_ZERO(&mut set);
        for &c in cpus {
            if c >= libc::CPU_SETSIZE as usize {
                return Err(std::io::Error::other(format!("cpu {c} out of range")));
            }
            libc::CPU_SET(c, &mut set);
        }
        if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
            return Err(std::io::Error::last_os_error());
        }
    }
    Ok(())
}

#[cfg(not(target_os = "linux"))]
pub fn current_thread_mask() -> Option<Vec<usize>> {
    None
}

#[cfg(not(target_os = "linux"))]
fn set_thread_mask(_cpus: &[usize]) -> std::io::Result<()> {
    Err(std::io::Error::new(std::io::ErrorKind::Unsupported, "no affinity interface"))
}
