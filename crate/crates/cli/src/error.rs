use std::path::PathBuf;

use dataplan_core::allocate::AllocateError;
use dataplan_core::cost::CostError;
use dataplan_core::diversity::DiversityError;
use dataplan_core::ingest::IngestError;
use dataplan_core::scaling::ScalingError;
use dataplan_core::simulate::SimulateError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error(transparent)]
    Allocate(#[from] AllocateError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Diversity(#[from] DiversityError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl CliError {
    /// 1 for bad input or usage, 2 when the tool itself is at fault.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 2,
            _ => 1,
        }
    }
}
