//! Behavior cloning from teleoperation demos.

use super::{DemoRecord, RlError};
use crate::nn::{train, Activation, Loss, LayerSpec, Network, NetworkSpec, SequenceDataset, TrainConfig};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { hidden: vec![64, 32, 16], epochs: 100, learning_rate: 1e-3, batch_size: 32, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub loss: Vec<f64>,
    /// Fraction of demos whose action is the policy's argmax after training.
    pub accuracy: f64,
    /// All demos share one action class.
    pub degenerate: bool,
}

/// Dense relu stack with a softmax output over `n_actions`.
pub fn policy_spec(obs_size: usize, hidden: &[usize], n_actions: usize, seed: u64) -> NetworkSpec {
    let mut layers: Vec<LayerSpec> = hidden.iter().map(|&u| LayerSpec::Dense { units: u, activation: Activation::Relu }).collect();
    layers.push(LayerSpec::Dense { units: n_actions, activation: Activation::Identity });
    layers.push(LayerSpec::Softmax);
    NetworkSpec::new(obs_size, layers, seed)
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..row.len() {
        if row[j] > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of `demos` whose action is the argmax of `policy`.
pub fn demo_accuracy(policy: &Network, demos: &[DemoRecord]) -> Result<f64, RlError> {
    if demos.is_empty() {
        return Err(RlError::NoDemos);
    }
    let (x, _) = to_arrays(demos)?;
    let p = policy.predict_rows(&x)?;
    let hits = demos.iter().enumerate().filter(|(i, d)| d.action_index() == Some(argmax(&p.row(*i).to_vec()))).count();
    Ok(hits as f64 / demos.len() as f64)
}

fn to_arrays(demos: &[DemoRecord]) -> Result<(Array2<f64>, Array2<f64>), RlError> {
    let (w, k) = (demos[0].obs.len(), demos[0].action.len());
    for d in demos {
        if d.obs.len() != w || d.action.len() != k {
            return Err(RlError::InvalidConfig("demo records disagree in size".into()));
        }
        if d.action_index().is_none() {
            return Err(RlError::InvalidConfig("demo action is not one-hot".into()));
        }
    }
    let x = Array2::from_shape_fn((demos.len(), w), |(i, j)| demos[i].obs[j]);
    let y = Array2::from_shape_fn((demos.len(), k), |(i, j)| demos[i].action[j]);
    Ok((x, y))
}

/// Trains a softmax policy by cross-entropy on `demos`. A single action class
/// is allowed but logged as a warning.
pub fn pretrain_from_demos(demos: &[DemoRecord], config: &PretrainConfig) -> Result<(Network, PretrainReport), RlError> {
    if demos.is_empty() {
        return Err(RlError::NoDemos);
    }
    let (x, y) = to_arrays(demos)?;
    let first = demos[0].action_index();
    let degenerate = demos.iter().all(|d| d.action_index() == first);
    if degenerate {
        log::warn!("all {} demos share one action; the cloned policy is degenerate", demos.len());
    }
    let mut net = Network::new(policy_spec(x.ncols(), &config.hidden, y.ncols(), config.seed))?;
    let data = SequenceDataset::from_rows(x, y)?;
    let cfg = TrainConfig {
        learning_rate: config.learning_rate,
        batch_size: config.batch_size,
        epochs: config.epochs,
        loss: Loss::CrossEntropy,
        select_best: false,
        seed: config.seed,
        ..TrainConfig::default()
    };
    let report = train(&mut net, &data, None, &cfg)?;
    let accuracy = demo_accuracy(&net, demos)?;
    Ok((net, PretrainReport { loss: report.train_loss, accuracy, degenerate }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Label = index of the largest of the first four features.
    fn synthetic(n: usize, seed: u64) -> Vec<DemoRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let obs: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
                DemoRecord::new(obs.clone(), argmax(&obs[..4]), 4)
            })
            .collect()
    }

    #[test]
    fn memorizes_a_single_demo() {
        let demos = vec![DemoRecord::new(vec![0.2, -0.4, 0.9], 2, 5); 3];
        let (net, report) = pretrain_from_demos(&demos, &PretrainConfig { epochs: 50, ..Default::default() }).unwrap();
        assert!(report.degenerate);
        assert_eq!(report.accuracy, 1.0);
        let p = net.predict_rows(&Array2::from_shape_vec((1, 3), vec![0.2, -0.4, 0.9]).unwrap()).unwrap();
        assert_eq!(argmax(p.row(0).as_slice().unwrap()), 2);
    }

    #[test]
    fn loss_decreases_over_first_epochs() {
        let demos = synthetic(50, 1);
        let cfg = PretrainConfig { epochs: 10, learning_rate: 1e-3, ..Default::default() };
        let (_, report) = pretrain_from_demos(&demos, &cfg).unwrap();
        for w in report.loss.windows(2) {
            assert!(w[1] < w[0], "{:?}", report.loss);
        }
    }

    #[test]
    fn clones_a_consistent_oracle() {
        let demos = synthetic(600, 2);
        let held_out = synthetic(300, 3);
        let (net, _) = pretrain_from_demos(&demos, &PretrainConfig { epochs: 60, ..Default::default() }).unwrap();
        let acc = demo_accuracy(&net, &held_out).unwrap();
        assert!(acc > 0.8, "held-out accuracy {acc}");
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(pretrain_from_demos(&[], &PretrainConfig::default()).unwrap_err(), RlError::NoDemos);
        let bad = vec![DemoRecord { obs: vec![0.0], action: vec![0.5, 0.5] }];
        assert!(pretrain_from_demos(&bad, &PretrainConfig::default()).is_err());
    }
}
