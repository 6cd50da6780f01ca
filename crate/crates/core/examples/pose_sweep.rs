//! Window-size sweep for object-angle estimation: LSTM against ridge and
//! least-squares baselines on one chronological split.
//!
//! cargo run --release --example pose_sweep

use tactile_workbench::pose::{run_sweep, PoseNetConfig, SweepConfig};

fn main() {
    let mut config = SweepConfig {
        window_sizes: vec![5, 20, 40],
        splits: Some(vec![2]),
        seeds_per_fold: 1,
        network: PoseNetConfig { lstm_units: vec![32, 16], dense_units: vec![16, 8] },
        ..SweepConfig::default()
    };
    config.train.epochs = 15;
    let result = run_sweep(&config).expect("sweep");
    println!("window  lstm_mae  lstm_r2  ridge_mae  ridge_r2  lsq_mae");
    for row in &result.rows {
        let lstm = row.lstm.expect("lstm trained");
        let lsq = row.linear.map_or(f64::NAN, |m| m.mae.mean);
        println!(
            "{:>6}  {:>8.4}  {:>7.4}  {:>9.4}  {:>8.4}  {:>7.4}",
            row.window, lstm.mae.mean, lstm.r2.mean, row.ridge.mae.mean, row.ridge.r2.mean, lsq
        );
    }
}
