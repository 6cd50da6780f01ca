//! Multi-rate sensor streams and the preprocessing that turns them into
//! windowed training data: alignment to camera frames, standardization,
//! sliding windows and rolling (chronological) folds.

mod align;
mod dataset;
mod io;
mod streams;

pub use align::{align_streams, AlignedGroup, AlignedSample, FEATURES_PER_SAMPLE};
pub use dataset::{
    build_windows, build_windows_at, rolling_folds, standardize, FeatureRows, FoldSplit, RollingSplit, Standardizer,
    WindowDataset,
};
pub use io::{
    read_stream_file, read_streams_jsonl, write_stream_file, write_streams_jsonl, write_windows_csv, StreamHeader, StreamRecord,
    STREAM_FORMAT_VERSION,
};
pub use streams::{simulate_streams, Channel, RotationTrial, SensorStream, StreamConfig, StreamSample, TrialStreams};

use crate::sim::SimError;

#[derive(Debug, thiserror::Error)]
pub enum SensorError {
    #[error("streams do not overlap")]
    EmptyOverlap,
    #[error("need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid stream: {0}")]
    InvalidStream(String),
    #[error("invalid fold configuration: {0}")]
    InvalidFolds(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}
