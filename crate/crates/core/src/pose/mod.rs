//! Object-angle estimation from tactile windows.
//!
//! Generates rotation recordings for each cylinder size, turns them into
//! windowed datasets and trains the LSTM regressor alongside ridge and
//! least-squares baselines over a sweep of window sizes, with rolling
//! chronological cross-validation.

use crate::nn::{self, Layer, LinearModel, MetricsReport, MetricsSummary, Network, NetworkSpec, NnError, TrainConfig};
use crate::seed::{derive_indexed, derive_seed};
use crate::sensors::{
    align_streams, build_windows, build_windows_at, rolling_folds, simulate_streams, FeatureRows, RollingSplit,
    RotationTrial, SensorError, StreamConfig, WindowDataset,
};
use crate::sim::{ObjectSpec, WorldConfig, CYLINDER_DIAMETERS};
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

#[derive(Debug, thiserror::Error)]
pub enum PoseError {
    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseNetConfig {
    pub lstm_units: Vec<usize>,
    pub dense_units: Vec<usize>,
}

impl Default for PoseNetConfig {
    fn default() -> Self {
        Self { lstm_units: vec![64, 32], dense_units: vec![32, 16, 8] }
    }
}

impl PoseNetConfig {
    /// Full-size widths.
    pub fn full_width() -> Self {
        Self { lstm_units: vec![512, 256], dense_units: vec![128, 64, 32] }
    }
}

/// Which rows end a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowAnchor {
    /// One window per aligned sample.
    EveryRow,
    /// One window per camera frame, ending at the frame's first sample.
    FrameStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub window_sizes: Vec<usize>,
    pub folds: usize,
    pub seeds_per_fold: usize,
    pub diameters: Vec<f64>,
    pub runs_per_object: usize,
    /// Seconds per recording.
    pub run_duration: f64,
    /// Rolling splits to evaluate (`0..folds-1`); all when absent.
    pub splits: Option<Vec<usize>>,
    pub anchor: WindowAnchor,
    pub network: PoseNetConfig,
    pub train: TrainConfig,
    pub ridge_lambda: f64,
    pub data_seed: u64,
    pub stream: StreamConfig,
    pub world: WorldConfig,
    /// Worker threads; 0 uses the available parallelism.
    pub threads: usize,
    /// Baselines only.
    pub skip_lstm: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            window_sizes: (1..=12).map(|i| i * 5).collect(),
            folds: 4,
            seeds_per_fold: 6,
            diameters: CYLINDER_DIAMETERS.to_vec(),
            runs_per_object: 5,
            run_duration: 8.0,
            splits: None,
            anchor: WindowAnchor::FrameStart,
            network: PoseNetConfig::default(),
            train: TrainConfig {
                learning_rate: 0.002,
                batch_size: 64,
                epochs: 60,
                loss: nn::Loss::Mae,
                select_best: true,
                optimizer: nn::OptimizerKind::Adam,
                seed: 0,
                grad_clip: Some(5.0),
            },
            ridge_lambda: 1.0,
            data_seed: 0,
            stream: StreamConfig::default(),
            world: WorldConfig::default(),
            threads: 0,
            skip_lstm: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), PoseError> {
        let bad = |m: String| Err(PoseError::InvalidConfig(m));
        if self.window_sizes.is_empty() || self.window_sizes[0] == 0 {
            return bad("window sizes must be positive".into());
        }
        if self.window_sizes.windows(2).any(|w| w[1] <= w[0]) {
            return bad("window sizes must be strictly ascending".into());
        }
        if self.folds < 2 {
            return bad(format!("need at least 2 folds, got {}", self.folds));
        }
        if self.seeds_per_fold == 0 || self.runs_per_object == 0 || self.diameters.is_empty() {
            return bad("seeds, runs and diameters must be non-empty".into());
        }
        if !(self.run_duration > 0.0) {
            return bad("run duration must be positive".into());
        }
        if self.ridge_lambda < 0.0 {
            return bad("ridge lambda must be non-negative".into());
        }
        if let Some(s) = &self.splits {
            if s.is_empty() || s.iter().any(|&i| i + 1 >= self.folds) {
                return bad(format!("splits must lie in 0..{}", self.folds - 1));
            }
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn split_indices(&self) -> Vec<usize> {
        self.splits.clone().unwrap_or_else(|| (0..self.folds - 1).collect())
    }
}

/// Aligned feature rows of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecording {
    pub diameter: f64,
    pub run: usize,
    pub seed: u64,
    pub rows: FeatureRows,
}

/// Simulates every (run, object) recording. Runs are interleaved across
/// object sizes in recording order, so every chronological fold pools all
/// sizes.
pub fn generate_runs(config: &SweepConfig) -> Result<Vec<RunRecording>, PoseError> {
    let mut out = Vec::new();
    for run in 0..config.runs_per_object {
        for (k, &d) in config.diameters.iter().enumerate() {
            let seed = derive_indexed(derive_indexed(config.data_seed, "run", run as u64), "object", k as u64);
            let trial = RotationTrial::new(ObjectSpec::cylinder(d), config.run_duration, seed);
            let s = simulate_streams(&trial, &config.stream, &config.world)?;
            let groups = align_streams(&s.camera, &s.pressure, &s.marg)?;
            out.push(RunRecording { diameter: d, run, seed, rows: FeatureRows::from_groups(&groups) });
        }
    }
    Ok(out)
}

/// Windows of every recording, concatenated in recording order. Windows never
/// straddle two recordings.
pub fn build_dataset(runs: &[RunRecording], window: usize, anchor: WindowAnchor) -> Result<WindowDataset, PoseError> {
    let mut parts = Vec::with_capacity(runs.len());
    for r in runs {
        let d = match anchor {
            WindowAnchor::EveryRow => build_windows(&r.rows.rows, &r.rows.angles, window)?,
            WindowAnchor::FrameStart => build_windows_at(&r.rows.rows, &r.rows.angles, &r.rows.frame_starts, window)?,
        };
        parts.push(d);
    }
    Ok(WindowDataset::concat(&parts)?)
}

fn split_sets(data: &WindowDataset, split: &RollingSplit) -> Result<(WindowDataset, WindowDataset), PoseError> {
    let train_idx: Vec<usize> = split.train.clone().collect();
    let val_idx: Vec<usize> = split.validation.clone().collect();
    let stats = data.fit_standardizer(&train_idx)?;
    Ok((data.subset(&train_idx).standardized(&stats), data.subset(&val_idx).standardized(&stats)))
}

/// Ridge and ordinary least squares on the flattened windows of one split,
/// standardized with training statistics. The least-squares fit is `None`
/// when the design is rank deficient.
pub fn compare_baselines(
    data: &WindowDataset,
    split: &RollingSplit,
    lambda: f64,
) -> Result<(MetricsReport, Option<MetricsReport>), PoseError> {
    let (train, val) = split_sets(data, split)?;
    let (xt, xv) = (train.flattened(), val.flattened());
    let yt = Array1::from_vec(train.y.clone());
    let ridge = LinearModel::fit(&xt, &yt, lambda)?;
    let ridge_m = nn::evaluate(ridge.predict(&xv).as_slice().expect("contiguous"), &val.y)?;
    let linear = match LinearModel::fit(&xt, &yt, 0.0) {
        Ok(m) => Some(nn::evaluate(m.predict(&xv).as_slice().expect("contiguous"), &val.y)?),
        Err(NnError::Singular) => None,
        Err(e) => return Err(e.into()),
    };
    Ok((ridge_m, linear))
}

/// Result of training one LSTM on one split with one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmOutcome {
    pub metrics: MetricsReport,
    pub best_epoch: Option<usize>,
    pub train_windows: usize,
}

/// Trains the LSTM regressor on one split and scores it on the validation
/// fold, keeping the weights of the best validation epoch.
pub fn train_lstm(
    data: &WindowDataset,
    split: &RollingSplit,
    net_config: &PoseNetConfig,
    train_config: &TrainConfig,
    seed: u64,
) -> Result<LstmOutcome, PoseError> {
    let (train, val) = split_sets(data, split)?;
    let spec = NetworkSpec::lstm_regressor(
        data.features(),
        &net_config.lstm_units,
        &net_config.dense_units,
        derive_seed(seed, &["init"]),
    );
    let mut net = Network::new(spec)?;
    let mean = train.y.iter().sum::<f64>() / train.len().max(1) as f64;
    if let Some(Layer::Dense(d)) = net.layers_mut().last_mut() {
        d.bias.fill(mean);
    }
    let cfg = TrainConfig { seed: derive_seed(seed, &["shuffle"]), ..train_config.clone() };
    let (ts, vs) = (train.to_sequence_dataset(), val.to_sequence_dataset());
    let report = nn::train(&mut net, &ts, Some(&vs), &cfg)?;
    let pred = nn::train::predict_dataset(&net, &vs)?;
    let metrics = nn::evaluate(pred.as_slice().expect("contiguous"), &val.y)?;
    Ok(LstmOutcome { metrics, best_epoch: report.best_epoch, train_windows: train.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub window: usize,
    pub split: usize,
    pub seed_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    pub outcome: Option<LstmOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub window: usize,
    pub split: usize,
    pub ridge: MetricsReport,
    pub linear: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub window: usize,
    pub lstm: Option<MetricsSummary>,
    pub ridge: MetricsSummary,
    pub linear: Option<MetricsSummary>,
    pub failed_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<CellResult>,
    pub baselines: Vec<BaselineResult>,
}

impl SweepResult {
    pub fn row(&self, window: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.window == window)
    }
}

fn worker_count(requested: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

/// Trains every (window, split, seed) cell and the per-split baselines.
/// Cells run on a small worker pool; each is seeded from its key, and
/// results are merged by key, so the table does not depend on scheduling.
/// A failing cell is recorded and skipped.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult, PoseError> {
    config.validate()?;
    let runs = generate_runs(config)?;
    let splits = config.split_indices();
    let mut datasets = BTreeMap::new();
    let mut baselines = Vec::new();
    for &w in &config.window_sizes {
        let data = build_dataset(&runs, w, config.anchor)?;
        let folds = rolling_folds(data.len(), config.folds)?;
        for &s in &splits {
            let (ridge, linear) = compare_baselines(&data, &folds.splits[s], config.ridge_lambda)?;
            baselines.push(BaselineResult { window: w, split: s, ridge, linear });
        }
        datasets.insert(w, (data, folds));
    }

    let mut keys = Vec::new();
    if !config.skip_lstm {
        for &w in &config.window_sizes {
            for &s in &splits {
                for k in 0..config.seeds_per_fold {
                    keys.push(CellKey { window: w, split: s, seed_index: k });
                }
            }
        }
    }
    let queue = Mutex::new(keys.clone().into_iter());
    let results = Mutex::new(BTreeMap::new());
    std::thread::scope(|scope| {
        for _ in 0..worker_count(config.threads).min(keys.len().max(1)) {
            scope.spawn(|| loop {
                let Some(key) = queue.lock().expect("queue").next() else { break };
                let (data, folds) = &datasets[&key.window];
                let seed = derive_indexed(
                    derive_indexed(derive_indexed(config.data_seed, "window", key.window as u64), "split", key.split as u64),
                    "seed",
                    key.seed_index as u64,
                );
                let cell = match train_lstm(data, &folds.splits[key.split], &config.network, &config.train, seed) {
                    Ok(o) => CellResult { key, outcome: Some(o), error: None },
                    Err(e) => {
                        log::warn!("cell {key:?} failed: {e}");
                        CellResult { key, outcome: None, error: Some(e.to_string()) }
                    }
                };
                log::info!("cell {key:?} done");
                results.lock().expect("results").insert(key, cell);
            });
        }
    });
    let cells: Vec<CellResult> = results.into_inner().expect("results").into_values().collect();

    let rows = config
        .window_sizes
        .iter()
        .map(|&w| {
            let lstm: Vec<MetricsReport> =
                cells.iter().filter(|c| c.key.window == w).filter_map(|c| c.outcome.as_ref().map(|o| o.metrics)).collect();
            let b: Vec<&BaselineResult> = baselines.iter().filter(|b| b.window == w).collect();
            let ridge: Vec<MetricsReport> = b.iter().map(|b| b.ridge).collect();
            let linear: Vec<MetricsReport> = b.iter().filter_map(|b| b.linear).collect();
            SweepRow {
                window: w,
                lstm: (!lstm.is_empty()).then(|| MetricsSummary::from_reports(&lstm)),
                ridge: MetricsSummary::from_reports(&ridge),
                linear: (!linear.is_empty()).then(|| MetricsSummary::from_reports(&linear)),
                failed_cells: cells.iter().filter(|c| c.key.window == w && c.outcome.is_none()).count(),
            }
        })
        .collect();
    Ok(SweepResult { rows, cells, baselines })
}

fn fmt_opt(m: Option<&MetricsSummary>) -> [String; 8] {
    match m {
        Some(m) => [m.mae.mean, m.mae.std, m.mse.mean, m.mse.std, m.r2.mean, m.r2.std, m.exp.mean, m.exp.std]
            .map(|v| format!("{v:.6}")),
        None => std::array::from_fn(|_| String::new()),
    }
}

/// CSV table with one row per (window, model): mean and std of MAE, MSE, R²
/// and EXP.
pub fn sweep_table_csv(result: &SweepResult) -> String {
    let mut out = String::from("window,model,mae,mae_std,mse,mse_std,r2,r2_std,exp,exp_std,failed_cells\n");
    for r in &result.rows {
        for (name, m, failed) in
            [("lstm", r.lstm.as_ref(), r.failed_cells), ("ridge", Some(&r.ridge), 0), ("linear", r.linear.as_ref(), 0)]
        {
            out.push_str(&format!("{},{name},{},{failed}\n", r.window, fmt_opt(m).join(",")));
        }
    }
    out
}

/// Writes `sweep_table.csv` and `sweep_summary.json` into `dir`.
pub fn write_sweep(result: &SweepResult, dir: &Path) -> Result<(), PoseError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("sweep_table.csv"), sweep_table_csv(result))?;
    let json = serde_json::to_string_pretty(result).map_err(std::io::Error::from)?;
    std::fs::write(dir.join("sweep_summary.json"), json + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SweepConfig {
        SweepConfig {
            window_sizes: vec![3],
            folds: 2,
            seeds_per_fold: 1,
            diameters: vec![0.065],
            runs_per_object: 2,
            run_duration: 2.0,
            network: PoseNetConfig { lstm_units: vec![4], dense_units: vec![4] },
            train: TrainConfig { epochs: 2, batch_size: 16, ..SweepConfig::default().train },
            threads: 1,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(SweepConfig::default().validate().is_ok());
        let mut c = SweepConfig::default();
        c.window_sizes = vec![10, 5];
        assert!(c.validate().is_err());
        let mut c = SweepConfig::default();
        c.splits = Some(vec![3]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_window_single_fold_gives_one_row() {
        let r = run_sweep(&tiny()).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.cells.len(), 1);
        assert!(r.rows[0].lstm.is_some());
        assert_eq!(sweep_table_csv(&r).lines().count(), 4);
    }

    #[test]
    fn recordings_interleave_sizes() {
        let mut c = tiny();
        c.diameters = CYLINDER_DIAMETERS.to_vec();
        c.run_duration = 0.5;
        let runs = generate_runs(&c).unwrap();
        let d: Vec<f64> = runs.iter().map(|r| r.diameter).collect();
        assert_eq!(d, vec![0.057, 0.065, 0.080, 0.057, 0.065, 0.080]);
    }

    #[test]
    fn ridge_without_penalty_equals_least_squares() {
        let c = tiny();
        let runs = generate_runs(&c).unwrap();
        let data = build_dataset(&runs, 2, WindowAnchor::FrameStart).unwrap();
        let folds = rolling_folds(data.len(), 2).unwrap();
        let (ridge, linear) = compare_baselines(&data, &folds.splits[0], 0.0).unwrap();
        let linear = linear.unwrap();
        assert!((ridge.mae - linear.mae).abs() < 1e-8);
        assert!((ridge.r2 - linear.r2).abs() < 1e-8);
    }
}
