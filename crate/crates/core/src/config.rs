use std::str::FromStr;

use crate::error::RdoError;

/// Numerical tolerances used across the hierarchies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Absolute constraint violation accepted as feasible.
    pub feas: f64,
    /// Relative minimum-eigenvalue floor for PSD checks.
    pub psd: f64,
    /// Slack for lower <= upper sanity checks.
    pub gap: f64,
    /// Relative slack in the fixed-point test.
    pub fp: f64,
    /// Margin standing in for strict PSD constraints.
    pub strict: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { feas: 1e-7, psd: 1e-8, gap: 1e-6, fp: 1e-6, strict: 1e-6 }
    }
}

/// Whether independent subproblems run on the rayon pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Clarabel,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Clarabel => "clarabel",
        }
    }
}

impl FromStr for Backend {
    type Err = RdoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clarabel" => Ok(Backend::Clarabel),
            other => Err(RdoError::UnknownBackend(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub tol: Tolerances,
    /// Maximum number of products per word level.
    pub product_cap: usize,
    pub execution: Execution,
    pub backend: Backend,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            tol: Tolerances::default(),
            product_cap: 4096,
            execution: Execution::default(),
            backend: Backend::default(),
        }
    }
}

impl Config {
    pub fn sequential() -> Self {
        Config { execution: Execution::Sequential, ..Config::default() }
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }
}

/// Default outer level cap: 64 for one matrix, 12 for switched dynamics.
pub fn default_r_max(s: usize) -> usize {
    if s <= 1 {
        64
    } else {
        12
    }
}
