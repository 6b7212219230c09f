//! Sweep configuration, the seeded Monte Carlo engine, and result output.

pub mod config;
pub mod engine;
pub mod output;
pub mod sweeps;

use crate::detection::DetectionError;
use crate::infotheory::InfoError;
use crate::quantizer::QuantizerError;
use thiserror::Error;

pub use config::{Experiment, FamilyKind, GeometryConfig, QuantizerSpec, Scheme, SweepConfig};
pub use engine::{simulate_ber, BerPoint, BerTally, DetectorKind, EarlyStop};
pub use output::{emit_csv, emit_json, write_outputs, Rows, SweepResult};
pub use sweeps::{run, run_ber_sweep, run_design, run_mi_sweep, run_range_sweep};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code: 2 for configuration errors, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io(_) => 2,
            HarnessError::Numerical(_) => 3,
        }
    }
}

impl From<DetectionError> for HarnessError {
    fn from(e: DetectionError) -> Self {
        match e {
            DetectionError::Info(inner) => inner.into(),
            other => HarnessError::Config(other.to_string()),
        }
    }
}

impl From<InfoError> for HarnessError {
    fn from(e: InfoError) -> Self {
        match e {
            InfoError::Stats(_) => HarnessError::Numerical(e.to_string()),
            InfoError::Quantizer(q) => q.into(),
            other => HarnessError::Config(other.to_string()),
        }
    }
}

impl From<QuantizerError> for HarnessError {
    fn from(e: QuantizerError) -> Self {
        match e {
            QuantizerError::NonConvergence { .. } | QuantizerError::Stats(_) => HarnessError::Numerical(e.to_string()),
            other => HarnessError::Config(other.to_string()),
        }
    }
}
