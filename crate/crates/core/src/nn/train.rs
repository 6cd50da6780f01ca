use super::layers::Seq;
use super::loss::Loss;
use super::network::Network;
use super::optim::{Optimizer, OptimizerKind};
use super::NnError;
use ndarray::{Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: Loss,
    /// Keep the weights of the epoch with the lowest validation loss.
    #[serde(default = "default_true")]
    pub select_best: bool,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    /// Seed for minibatch shuffling.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

fn default_true() -> bool {
    true
}

fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.00025,
            batch_size: 128,
            epochs: 60,
            loss: Loss::Mae,
            select_best: true,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0) {
            return Err(NnError::InvalidConfig(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Samples stored as `(n, timesteps, features)` with `(n, outputs)` targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub x: Array3<f64>,
    pub y: Array2<f64>,
}

impl SequenceDataset {
    pub fn new(x: Array3<f64>, y: Array2<f64>) -> Result<Self, NnError> {
        if x.shape()[0] != y.nrows() {
            return Err(NnError::ShapeMismatch { expected: x.shape()[0], got: y.nrows() });
        }
        Ok(Self { x, y })
    }

    /// Feed-forward data: one timestep per sample.
    pub fn from_rows(x: Array2<f64>, y: Array2<f64>) -> Result<Self, NnError> {
        let (n, f) = x.dim();
        Self::new(x.into_shape_with_order((n, 1, f)).expect("contiguous rows"), y)
    }

    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn timesteps(&self) -> usize {
        self.x.shape()[1]
    }

    /// Time-major minibatch for the given sample indices.
    pub fn batch(&self, idx: &[usize]) -> (Seq, Array2<f64>) {
        let sel = self.x.select(Axis(0), idx);
        let seq = (0..self.timesteps()).map(|t| sel.index_axis(Axis(1), t).to_owned()).collect();
        (seq, self.y.select(Axis(0), idx))
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self { x: self.x.select(Axis(0), idx), y: self.y.select(Axis(0), idx) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: Option<usize>,
}

/// One optimizer step on a minibatch. Non-finite losses or gradients leave
/// the network untouched.
pub fn backward_and_step(
    net: &mut Network,
    opt: &mut Optimizer,
    x: &Seq,
    y: &Array2<f64>,
    loss: Loss,
    grad_clip: Option<f64>,
) -> Result<f64, NnError> {
    let (pred, tape) = net.forward(x)?;
    if pred.dim() != y.dim() {
        return Err(NnError::ShapeMismatch { expected: pred.ncols(), got: y.ncols() });
    }
    let (value, d_out) = loss.value_and_grad(&pred, y);
    if !value.is_finite() {
        return Err(NnError::NaNLoss { epoch: 0 });
    }
    let (mut grads, _) = net.backward(&tape, &d_out);
    if !grads.is_finite() {
        return Err(NnError::NaNLoss { epoch: 0 });
    }
    if let Some(c) = grad_clip {
        grads.clip_norm(c);
    }
    opt.step(net, &grads);
    Ok(value)
}

/// Mean loss over a dataset, evaluated in chunks.
pub fn dataset_loss(net: &Network, data: &SequenceDataset, loss: Loss) -> Result<f64, NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(512) {
        let (x, y) = data.batch(chunk);
        total += loss.value(&net.predict(&x)?, &y) * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Predictions for every sample, in order.
pub fn predict_dataset(net: &Network, data: &SequenceDataset) -> Result<Array2<f64>, NnError> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut parts = Vec::new();
    for chunk in idx.chunks(512) {
        parts.push(net.predict(&data.batch(chunk).0)?);
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).map_err(|_| NnError::EmptyBatch)
}

/// Minibatch training. On a non-finite loss the epoch is abandoned, the
/// weights from before it are restored and `NaNLoss` is returned.
pub fn train(
    net: &mut Network,
    train_set: &SequenceDataset,
    val_set: Option<&SequenceDataset>,
    config: &TrainConfig,
) -> Result<TrainReport, NnError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport { train_loss: Vec::new(), val_loss: Vec::new(), best_epoch: None };
    let mut best: Option<(f64, Network)> = None;

    for epoch in 0..config.epochs {
        let before = net.clone();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (x, y) = train_set.batch(chunk);
            match backward_and_step(net, &mut opt, &x, &y, config.loss, config.grad_clip) {
                Ok(v) => total += v * chunk.len() as f64,
                Err(NnError::NaNLoss { .. }) => {
                    *net = before;
                    return Err(NnError::NaNLoss { epoch });
                }
                Err(e) => return Err(e),
            }
        }
        report.train_loss.push(total / train_set.len() as f64);
        log::debug!("epoch {epoch}: train loss {:.6}", total / train_set.len() as f64);

        if let Some(val) = val_set {
            let v = dataset_loss(net, val, config.loss)?;
            report.val_loss.push(v);
            if config.select_best && best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, net.clone()));
                report.best_epoch = Some(epoch);
            }
        }
    }
    if let Some((_, w)) = best {
        *net = w;
    }
    Ok(report)
}
