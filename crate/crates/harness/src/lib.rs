//! Experiment driver for decentralized Catalyst: configuration, data ingestion,
//! synthetic instances, traces and certificates.

pub mod config;
pub mod data;
pub mod experiment;
pub mod synth;

use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] dcatalyst::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
