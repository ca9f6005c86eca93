use std::path::{Path, PathBuf};

use thiserror::Error;
use vichan_core::dataset::DatasetError;
use vichan_core::losses::LossError;
use vichan_net::NetError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("checkpoint not found: {0}")]
    CheckpointNotFound(PathBuf),
    #[error("checkpoint was trained for {checkpoint}, but {requested} was requested")]
    TargetMismatch { checkpoint: String, requested: String },
    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFinite { epoch: usize, step: usize, detail: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unpaired datasets: {0}")]
    Unpaired(String),
    #[error("malformed run artifact {path}: {message}")]
    Artifact { path: String, message: String },
    #[error("plot: {0}")]
    Plot(String),
}

impl HarnessError {
    /// Short diagnostic class printed by the command line.
    pub fn class(&self) -> &'static str {
        match self {
            HarnessError::Dataset(_) => "dataset",
            HarnessError::Net(_) => "model",
            HarnessError::Loss(_) => "loss",
            HarnessError::Io { .. } => "io",
            HarnessError::CheckpointNotFound(_) => "checkpoint",
            HarnessError::TargetMismatch { .. } => "target",
            HarnessError::NonFinite { .. } => "diverged",
            HarnessError::Config(_) => "config",
            HarnessError::Unpaired(_) => "unpaired",
            HarnessError::Artifact { .. } => "artifact",
            HarnessError::Plot(_) => "plot",
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    pub fn artifact(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Artifact { path: path.display().to_string(), message: e.to_string() }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
