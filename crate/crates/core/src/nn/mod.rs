//! Small neural-network and regression engine.
//!
//! Dense, LSTM, layer-norm and softmax layers with hand-written backward
//! passes, Adam/SGD, closed-form ridge and least-squares fits, regression
//! metrics and a finite-difference gradient checker.

pub mod gradcheck;
pub mod layers;
pub mod linear;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod train;

pub use gradcheck::gradient_check;
pub use layers::{Activation, Seq};
pub use linear::{fit_least_squares, fit_ridge, LinearModel};
pub use loss::Loss;
pub use metrics::{evaluate, MeanStd, MetricsReport, MetricsSummary};
pub use network::{Gradients, Layer, LayerSpec, Network, NetworkSpec, Tape, WeightsDocument};
pub use optim::{Optimizer, OptimizerKind};
pub use train::{backward_and_step, train, SequenceDataset, TrainConfig, TrainReport};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss in epoch {epoch}")]
    NaNLoss { epoch: usize },
    #[error("singular system")]
    Singular,
    #[error("target variance is zero")]
    ZeroTargetVariance,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("weights document: {0}")]
    Weights(String),
}
