//! The discrete space of parallelization configurations.
//!
//! A [`Configuration`] is `(n_processes, n_sampling_cores, n_training_cores)`.
//! It is feasible on a [`SearchSpace`] when every component is at least one,
//! the per-dimension caps hold, and `n * (s + t) <= total_cores`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on the number of worker processes.
pub const DEFAULT_MAX_PROCESSES: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpaceError {
    #[error("search space is empty: {total_cores} cores cannot host one sampling and one training core")]
    EmptySpace { total_cores: u32 },
    #[error("configuration {0} is not a member of the search space")]
    InvalidConfiguration(Configuration),
}

/// One point of the search space. Field order gives the lexicographic ordering
/// used for enumeration and tie-breaking.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Configuration {
    pub n_processes: u32,
    pub n_sampling_cores: u32,
    pub n_training_cores: u32,
}

impl Configuration {
    pub const fn new(n_processes: u32, n_sampling_cores: u32, n_training_cores: u32) -> Self {
        Self {
            n_processes,
            n_sampling_cores,
            n_training_cores,
        }
    }

    /// Cores used by the whole configuration.
    pub fn cores_used(&self) -> u64 {
        u64::from(self.n_processes)
            * (u64::from(self.n_sampling_cores) + u64::from(self.n_training_cores))
    }

    pub fn cores_per_process(&self) -> u32 {
        self.n_sampling_cores + self.n_training_cores
    }

    pub fn as_array(&self) -> [u32; 3] {
        [self.n_processes, self.n_sampling_cores, self.n_training_cores]
    }

    fn from_array(v: [u32; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {})",
            self.n_processes, self.n_sampling_cores, self.n_training_cores
        )
    }
}

/// Bounds that define the feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub total_cores: u32,
    pub max_processes: u32,
    pub max_sampling_cores: Option<u32>,
    pub max_training_cores: Option<u32>,
}

impl SearchSpace {
    /// Space over `total_cores` with default caps (16 processes, no core caps).
    pub fn new(total_cores: u32) -> Self {
        Self {
            total_cores,
            max_processes: DEFAULT_MAX_PROCESSES,
            max_sampling_cores: None,
            max_training_cores: None,
        }
    }

    pub fn with_caps(
        total_cores: u32,
        max_processes: u32,
        max_sampling_cores: Option<u32>,
        max_training_cores: Option<u32>,
    ) -> Self {
        Self {
            total_cores,
            max_processes,
            max_sampling_cores,
            max_training_cores,
        }
    }

    /// The capped 112-core space used for tuner-quality experiments:
    /// up to 8 processes, 4 sampling and 28 training cores each (678 points).
    pub fn simulated_112() -> Self {
        Self::with_caps(112, 8, Some(4), Some(28))
    }

    fn sampling_cap(&self) -> u32 {
        self.max_sampling_cores.unwrap_or(u32::MAX)
    }

    fn training_cap(&self) -> u32 {
        self.max_training_cores.unwrap_or(u32::MAX)
    }

    /// Membership test, equivalent to `enumerate().contains(cfg)`.
    pub fn contains(&self, cfg: &Configuration) -> bool {
        cfg.n_processes >= 1
            && cfg.n_sampling_cores >= 1
            && cfg.n_training_cores >= 1
            && cfg.n_processes <= self.max_processes
            && cfg.n_sampling_cores <= self.sampling_cap()
            && cfg.n_training_cores <= self.training_cap()
            && cfg.cores_used() <= u64::from(self.total_cores)
    }

    /// Every feasible configuration, once, in lexicographic order.
    pub fn enumerate(&self) -> Result<Vec<Configuration>, SpaceError> {
        if self.total_cores < 2 || self.max_processes == 0 {
            return Err(SpaceError::EmptySpace {
                total_cores: self.total_cores,
            });
        }
        let mut out = Vec::new();
        for n in 1..=self.max_processes {
            let per_process = self.total_cores / n;
            if per_process < 2 {
                break;
            }
            for s in 1..=self.sampling_cap().min(per_process - 1) {
                for t in 1..=self.training_cap().min(per_process - s) {
                    out.push(Configuration::new(n, s, t));
                }
            }
        }
        if out.is_empty() {
            return Err(SpaceError::EmptySpace {
                total_cores: self.total_cores,
            });
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.enumerate().map(|v| v.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inclusive `[min, max]` attained by each dimension over the feasible set.
    pub fn dimension_ranges(&self) -> [(u32, u32); 3] {
        let n_max = self.max_processes.min(self.total_cores / 2).max(1);
        let s_max = self
            .sampling_cap()
            .min(self.total_cores.saturating_sub(1))
            .max(1);
        let t_max = self
            .training_cap()
            .min(self.total_cores.saturating_sub(1))
            .max(1);
        [(1, n_max), (1, s_max), (1, t_max)]
    }

    /// Map a feasible configuration onto `[0, 1]^3`; a degenerate dimension maps to 0.5.
    pub fn normalize(&self, cfg: &Configuration) -> Result<[f64; 3], SpaceError> {
        if !self.contains(cfg) {
            return Err(SpaceError::InvalidConfiguration(*cfg));
        }
        let ranges = self.dimension_ranges();
        let values = cfg.as_array();
        let mut out = [0.0; 3];
        for d in 0..3 {
            let (lo, hi) = ranges[d];
            out[d] = if hi == lo {
                0.5
            } else {
                f64::from(values[d] - lo) / f64::from(hi - lo)
            };
        }
        Ok(out)
    }

    /// A feasible configuration one ±1 step away from `cfg` in a single
    /// dimension, chosen uniformly among the feasible moves. Returns `cfg`
    /// itself when it has no feasible neighbour.
    pub fn neighbor<R: Rng + ?Sized>(
        &self,
        cfg: &Configuration,
        rng: &mut R,
    ) -> Result<Configuration, SpaceError> {
        if !self.contains(cfg) {
            return Err(SpaceError::InvalidConfiguration(*cfg));
        }
        let base = cfg.as_array();
        let mut moves = Vec::with_capacity(6);
        for d in 0..3 {
            for delta in [-1i64, 1] {
                let v = i64::from(base[d]) + delta;
                if v < 1 || v > i64::from(u32::MAX) {
                    continue;
                }
                let mut cand = base;
                cand[d] = v as u32;
                let cand = Configuration::from_array(cand);
                if self.contains(&cand) {
                    moves.push(cand);
                }
            }
        }
        if moves.is_empty() {
            return Ok(*cfg);
        }
        Ok(moves[rng.random_range(0..moves.len())])
    }
}
