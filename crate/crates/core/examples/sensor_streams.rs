//! Simulates one rotation recording, aligns the three sensor streams and
//! builds frame-anchored windows.
//!
//! cargo run --release --example sensor_streams -- [diameter_m] [seed]

use tactile_workbench::sensors::{align_streams, build_windows_at, simulate_streams, FeatureRows, RotationTrial, StreamConfig};
use tactile_workbench::sim::{ObjectSpec, WorldConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let diameter: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.065);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let trial = RotationTrial::new(ObjectSpec::cylinder(diameter), 4.0, seed);
    let streams = simulate_streams(&trial, &StreamConfig::default(), &WorldConfig::default()).expect("simulate");
    for s in [&streams.camera, &streams.pressure, &streams.marg] {
        println!("{:>12?}: {:5} samples at {:.2} Hz", s.channel, s.samples.len(), s.nominal_rate);
    }

    let groups = align_streams(&streams.camera, &streams.pressure, &streams.marg).expect("align");
    let worst = groups.iter().flat_map(|g| &g.samples).map(|s| (s.pressure_time - s.marg_time).abs()).fold(0.0, f64::max);
    let per_frame = groups.iter().map(|g| g.samples.len()).sum::<usize>() as f64 / groups.len() as f64;
    println!("{} frames, {per_frame:.1} pressure/MARG pairs per frame, worst pairing gap {:.2} ms", groups.len(), worst * 1e3);

    let rows = FeatureRows::from_groups(&groups);
    let windows = build_windows_at(&rows.rows, &rows.angles, &rows.frame_starts, 20).expect("windows");
    println!("{} windows of 20 x {} features", windows.len(), windows.features());
    let a = &rows.angles;
    println!("angle range {:.3}..{:.3} rad", a.iter().cloned().fold(f64::MAX, f64::min), a.iter().cloned().fold(f64::MIN, f64::max));
}
