//! Experiment orchestration, artifact persistence and the live session
//! protocol.
//!
//! Runs are described by a [`RunConfig`]. Every file a run writes carries the
//! hash of the resolved config, and [`load_run`] refuses a run directory
//! whose summary does not match its config.

mod config;
mod experiment;
pub mod protocol;
mod server;

pub use config::{source_name, ExperimentKind, ExtractExperiment, GraspExperiment, PoseExperiment, RunConfig};
pub use experiment::{
    checks, load_run, median, run_experiment, run_experiment_with, Check, ExtractCell, ExtractSummary, GraspSeedSummary, GraspSummary,
    MetricsEvent, PoseSeedSummary, PoseSummary, PoseWindowSummary, RunSummary, Summary,
};
pub use server::{Server, ServerConfig, ServerHandle};

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::PathBuf;

/// Environment variable naming the data root for demos and runs.
pub const DATA_ROOT_ENV: &str = "TACTILE_WORKBENCH_DATA";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("{context}: {message}")]
    EnvFailure { context: String, message: String },
    #[error("config hash mismatch: artifact has {found}, config gives {expected}")]
    HashMismatch { expected: String, found: String },
    #[error("another connection holds the teleop session")]
    ConcurrentWriter,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Hex SHA-256 of the compact JSON form of `value`.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// `$TACTILE_WORKBENCH_DATA`, or `./data`.
pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

/// A behavior-cloned policy with what it was trained on.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub config_hash: String,
    pub pretrain: crate::rl::PretrainConfig,
    /// Demo session files, as given.
    pub demos: Vec<String>,
    pub records: usize,
    pub accuracy: f64,
    pub weights: crate::nn::WeightsDocument,
}

impl PolicyDocument {
    pub fn new(pretrain: crate::rl::PretrainConfig, demos: Vec<String>, records: usize, accuracy: f64, net: &crate::nn::Network) -> Self {
        let config_hash = config_hash(&(&pretrain, &demos, records));
        Self { config_hash, pretrain, demos, records, accuracy, weights: crate::nn::WeightsDocument::from_network(net) }
    }

    pub fn load(path: &std::path::Path) -> Result<(Self, crate::nn::Network), ServiceError> {
        let doc: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let expected = config_hash(&(&doc.pretrain, &doc.demos, doc.records));
        if expected != doc.config_hash {
            return Err(ServiceError::HashMismatch { expected, found: doc.config_hash });
        }
        let net = doc.weights.clone().into_network().map_err(|e| ServiceError::ConfigInvalid(e.to_string()))?;
        Ok((doc, net))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ServiceError> {
        std::fs::write(path, serde_json::to_string(self)? + "\n")?;
        Ok(())
    }
}
