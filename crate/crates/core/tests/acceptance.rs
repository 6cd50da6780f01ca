//! Acceptance suite. Prints one PASS/FAIL line per criterion to stderr
//! (uncaptured) and fails if any criterion fails.
//!
//! Run alone with `cargo test --release --test acceptance`.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};
use tactile_workbench::extract::{self, ExtractConfig};
use tactile_workbench::geometry::{FilterState, Quaternion, Vec3};
use tactile_workbench::grasp::{self, GraspConfig, GraspOutcome};
use tactile_workbench::nn::{gradient_check, Activation, LayerSpec, Loss, Network, NetworkSpec};
use tactile_workbench::sensors::{align_streams, Channel, SensorStream, StreamSample};
use tactile_workbench::service::{run_experiment, RunConfig, RunSummary, Summary};
use tactile_workbench::sim::PegProfile;

struct Report {
    failed: Vec<String>,
}

impl Report {
    fn line(&mut self, id: &str, passed: bool, detail: String) {
        let tag = if passed { "PASS" } else { "FAIL" };
        writeln!(std::io::stderr(), "[{tag}] {id}: {detail}").unwrap();
        if !passed {
            self.failed.push(id.to_string());
        }
    }
}

fn config(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn run(mut c: RunConfig, dir: PathBuf) -> (RunSummary, Duration) {
    c.output_dir = Some(dir);
    let t = Instant::now();
    let (_, summary) = run_experiment(&c).unwrap();
    (summary, t.elapsed())
}

fn check<'a>(s: &'a RunSummary, name: &str) -> &'a tactile_workbench::service::Check {
    s.checks.iter().find(|c| c.name == name).unwrap_or_else(|| panic!("no {name} check"))
}

fn bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn pose_gap(r: &mut Report, tmp: &Path) {
    let (s, took) = run(config("pose_gap.json"), tmp.join("pose_gap"));
    let Summary::PoseSweep(p) = &s.summary else { unreachable!() };
    // recompute the median gap from the per-seed rows
    let gaps: Vec<f64> = p.seeds.iter().map(|s| s.windows[0].lstm_r2.unwrap() - s.windows[0].ridge_r2).collect();
    let gap = median(gaps);
    let ok = gap >= 0.05 && p.seeds.len() == 5 && took < Duration::from_secs(600);
    assert_eq!(check(&s, "lstm_r2_gap").passed, gap >= 0.05);
    r.line(
        "lstm_vs_ridge",
        ok,
        format!("median R² gap {gap:.4} over {} seeds (need ≥ 0.05), {:.0} s (limit 600 s)", p.seeds.len(), took.as_secs_f64()),
    );
}

fn window_trend(r: &mut Report, tmp: &Path) {
    let (s, took) = run(config("pose_windows.json"), tmp.join("pose_windows"));
    let Summary::PoseSweep(p) = &s.summary else { unreachable!() };
    let mae = |w: usize| {
        let i = p.median.iter().position(|m| m.window == w).unwrap();
        median(p.seeds.iter().map(|s| s.windows[i].lstm_mae.unwrap()).collect())
    };
    let (m5, m20, m40, m60) = (mae(5), mae(20), mae(40), mae(60));
    let ok = m40 <= m5 && (m60 - m40).abs() < (m20 - m5).abs() && p.seeds.len() == 5;
    assert_eq!(check(&s, "window_trend").passed, ok);
    r.line(
        "window_trend",
        ok,
        format!("median MAE W=5 {m5:.4}, W=20 {m20:.4}, W=40 {m40:.4}, W=60 {m60:.4} ({:.0} s)", took.as_secs_f64()),
    );
}

fn steps_ratio(dir: &Path, seed: u64, w: usize) -> (usize, f64) {
    let text = std::fs::read_to_string(dir.join(format!("grasp_seed{seed}.csv"))).unwrap();
    let steps: Vec<f64> = text.lines().skip(2).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (steps.len(), mean(&steps[steps.len() - w..]) / mean(&steps[..w]))
}

fn grasp_trend(r: &mut Report, tmp: &Path) -> Vec<(String, Vec<u8>)> {
    let c = config("grasp.json");
    let dir = tmp.join("grasp");
    let (s, took) = run(c.clone(), dir.clone());
    // recompute from the per-episode CSVs
    let per_seed: Vec<(usize, f64)> = c.seeds.iter().map(|&seed| steps_ratio(&dir, seed, 50)).collect();
    let fewest = per_seed.iter().map(|p| p.0).min().unwrap();
    let ratio = median(per_seed.iter().map(|p| p.1).collect());
    let ok = fewest >= 300 && ratio <= 0.6 && c.seeds.len() == 5 && took < Duration::from_secs(900);
    assert_eq!(check(&s, "grasp_steps_trend").passed, fewest >= 300 && ratio <= 0.6);
    let ratios: Vec<String> = per_seed.iter().map(|p| format!("{:.3}", p.1)).collect();
    r.line(
        "grasp_steps_trend",
        ok,
        format!(
            "median final/initial 50-episode MA {ratio:.3} (need ≤ 0.6), per seed [{}], fewest episodes {fewest}, {:.0} s (limit 900 s)",
            ratios.join(", "),
            took.as_secs_f64()
        ),
    );
    bytes(&dir)
}

fn first_success(dir: &Path, source: &str, cap: usize) -> Vec<f64> {
    let text = std::fs::read_to_string(dir.join("extract_runs.csv")).unwrap();
    let mut lines = text.lines().skip(1);
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |n: &str| header.iter().position(|h| *h == n).unwrap();
    let (t, s, e) = (col("target"), col("source"), col("episodes_to_success"));
    lines
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|f| f[t] == "vertical" && f[s] == source)
        .map(|f| f[e].parse::<f64>().unwrap_or((cap + 1) as f64))
        .collect()
}

fn extraction(r: &mut Report, tmp: &Path) -> Vec<(String, Vec<u8>)> {
    let c = config("extract_vertical.json");
    let dir = tmp.join("extract");
    let (s, _) = run(c.clone(), dir.clone());
    let cap = c.resolved().extract.unwrap().max_episodes;
    let scratch = first_success(&dir, "scratch", cap);
    let same = first_success(&dir, "vertical", cap);
    let curved = first_success(&dir, "curved", cap);
    assert_eq!(scratch.len(), 10);
    assert_eq!(same.len(), 10);
    let (ms, mp, mc) = (median(scratch), median(same), median(curved));
    assert_eq!(check(&s, "pretraining_speedup").passed, mp <= 0.7 * ms);
    assert_eq!(check(&s, "curved_transfer").passed, mc <= ms);
    r.line("pretraining_speedup", mp <= 0.7 * ms, format!("vertical peg, 10 paired runs: median {mp} pretrained vs {ms} scratch (need ≤ 0.7×)"));
    r.line("curved_transfer", mc <= ms, format!("vertical peg median {mc} after curved-peg pretraining vs {ms} scratch"));
    bytes(&dir)
}

fn reward_cases(r: &mut Report) {
    let g = GraspConfig::default();
    let t = g.baro_threshold;
    let tilt = g.collision_deg.to_radians();
    let grasp_cases = [
        ([t + 10.0, t + 10.0], tilt * 1.5, true, GraspOutcome::Collision, -0.1),
        ([0.0, 0.0], 0.0, true, GraspOutcome::NoContact, -0.1),
        ([t, t], 0.0, true, GraspOutcome::NoContact, -0.1),
        ([t + 1.0, 0.0], 0.0, true, GraspOutcome::OneSided, -0.1),
        ([0.0, t + 1.0], 0.0, true, GraspOutcome::OneSided, -0.1),
        ([t + 1.0, t + 1.0], 0.0, false, GraspOutcome::LiftFailed, -0.1),
        ([t + 1.0, t + 1.0], tilt * 0.5, true, GraspOutcome::Success, 0.5),
    ];
    let mut seen = BTreeSet::new();
    let mut grasp_ok = true;
    for (baros, tilt, lift, outcome, reward) in grasp_cases {
        let got = grasp::compute_reward(baros, tilt, lift, &g);
        grasp_ok &= got == (reward, outcome);
        seen.insert(format!("{outcome:?}"));
    }
    grasp_ok &= seen.len() == 5;

    let x = ExtractConfig::default();
    let goal = 0.07;
    let extract_cases = [
        // rise, pressure, dh, limited, reward
        (goal, 0.0, 0.005, false, 1.0),
        (goal + 0.01, 0.9, 0.005, false, 1.0),
        (0.01, 0.6, 0.005, false, -0.5),
        (0.01, 0.6, -0.005, true, -0.5),
        (0.01, 0.2, 0.005, false, 0.05),
        (0.01, 0.2, -0.005, false, -0.05),
        (0.01, 0.2, 0.05, false, 0.1),
        (0.01, 0.2, -0.05, false, -0.1),
        (0.01, 0.2, 0.005, true, 0.0),
        (0.01, 0.2, -0.005, true, -0.05),
        (0.01, 0.5, 0.0, false, 0.0),
    ];
    let mut extract_ok = true;
    for (rise, p, dh, limited, want) in extract_cases {
        let got = extract::compute_reward(rise, goal, p, dh, limited, &x);
        if (got - want).abs() > 1e-12 {
            extract_ok = false;
            writeln!(std::io::stderr(), "  extract reward rise={rise} p={p} dh={dh} limited={limited}: got {got}, want {want}").unwrap();
        }
    }
    r.line(
        "reward_cases",
        grasp_ok && extract_ok,
        format!(
            "grasp: {} cases covering {}/5 outcomes; extraction: {} cases covering goal, friction, shaping, clip and workspace limit",
            grasp_cases.len(),
            seen.len(),
            extract_cases.len()
        ),
    );
}

fn numerical_core(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let seq = |t: usize, w: usize, rng: &mut ChaCha8Rng| -> Vec<Array2<f64>> {
        (0..t).map(|_| Array2::from_shape_fn((4, w), |_| rng.gen_range(-1.0..1.0))).collect()
    };
    let dense = |u, a| LayerSpec::Dense { units: u, activation: a };
    let nets = [
        ("dense", NetworkSpec::new(3, vec![dense(5, Activation::Tanh), dense(2, Activation::Identity)], 1), 1, Loss::Mse),
        ("lstm", NetworkSpec::new(3, vec![LayerSpec::Lstm { units: 4 }, dense(1, Activation::Identity)], 2), 5, Loss::Mse),
        ("layernorm", NetworkSpec::new(3, vec![dense(4, Activation::Relu), LayerSpec::LayerNorm, dense(2, Activation::Identity)], 3), 1, Loss::Mae),
        ("softmax", NetworkSpec::new(3, vec![dense(4, Activation::Identity), LayerSpec::Softmax], 4), 1, Loss::CrossEntropy),
    ];
    let mut worst = Vec::new();
    for (name, spec, t, loss) in nets {
        let net = Network::new(spec).unwrap();
        let x = seq(t, 3, &mut rng);
        let out = net.output_width();
        let target = if loss == Loss::CrossEntropy {
            Array2::from_shape_fn((4, out), |(i, j)| if j == i % out { 1.0 } else { 0.0 })
        } else {
            Array2::from_shape_fn((4, out), |_| rng.gen_range(-1.0..1.0))
        };
        worst.push((name, gradient_check(&net, &x, &target, loss, 1e-6).unwrap()));
    }
    let grad_ok = worst.iter().all(|w| w.1 < 1e-4);
    let grads: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();

    // static tilt: a sensor at rest reads gravity in its own frame
    let mut tilt_err: f64 = 0.0;
    for (roll, pitch) in [(20.0f64, 0.0f64), (0.0, -35.0), (10.0, 25.0), (-40.0, 15.0)] {
        let truth = Quaternion::from_euler(roll.to_radians(), pitch.to_radians(), 0.3);
        let accel = truth.conjugate().rotate(Vec3::Z).scale(9.81);
        let mut f = FilterState::new(0.1);
        for _ in 0..3000 {
            f = f.update(Vec3::ZERO, accel, 0.01).unwrap();
        }
        let est = f.q.conjugate().rotate(Vec3::Z);
        let want = accel.normalized().unwrap();
        tilt_err = tilt_err.max(est.dot(want).clamp(-1.0, 1.0).acos().to_degrees());
    }
    let tilt_ok = tilt_err < 0.5;

    let (mismatches, trials) = alignment_against_oracle(1000);
    r.line("gradcheck", grad_ok, format!("max relative error {} (need < 1e-4)", grads.join(", ")));
    r.line("madgwick_static_tilt", tilt_ok, format!("worst tilt error {tilt_err:.4}° over 4 static poses (need < 0.5°)"));
    r.line("alignment_oracle", mismatches == 0, format!("{mismatches} mismatches in {trials} random stream triples"));
}

fn stream(channel: Channel, times: &[f64]) -> SensorStream {
    let samples = times.iter().map(|&t| StreamSample { t, v: vec![t; channel.width()] }).collect();
    SensorStream { channel, nominal_rate: 1.0, samples }
}

/// Pairs (frame, pressure index, marg index) by exhaustive search.
fn oracle(cam: &[f64], p: &[f64], m: &[f64]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    let period = if cam.len() > 1 { cam[cam.len() - 1] - cam[cam.len() - 2] } else { f64::INFINITY };
    for (pi, &t) in p.iter().enumerate() {
        let Some(f) = (0..cam.len()).rev().find(|&f| cam[f] <= t) else { continue };
        if f == cam.len() - 1 && t >= cam[f] + period {
            continue;
        }
        let mut best = 0;
        for mi in 1..m.len() {
            if (m[mi] - t).abs() < (m[best] - t).abs() {
                best = mi;
            }
        }
        out.push((f, pi, best));
    }
    out
}

fn alignment_against_oracle(trials: usize) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let times = |n: usize, rng: &mut ChaCha8Rng| {
        // millisecond grid so that equidistant ties occur
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0..1500) as f64 / 1000.0).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let mut mismatches = 0;
    for _ in 0..trials {
        let (nc, np, nm) = (rng.gen_range(1..8), rng.gen_range(1..40), rng.gen_range(1..60));
        let (c, p, m) = (times(nc, &mut rng), times(np, &mut rng), times(nm, &mut rng));
        let want = oracle(&c, &p, &m);
        let got = match align_streams(&stream(Channel::CameraAngle, &c), &stream(Channel::Pressure, &p), &stream(Channel::Marg, &m)) {
            Ok(groups) => groups
                .iter()
                .flat_map(|g| g.samples.iter())
                .map(|s| {
                    let pi = p.iter().position(|&t| t == s.pressure_time).unwrap();
                    let mi = m.iter().position(|&t| t == s.marg_time).unwrap();
                    (s.frame, pi, mi)
                })
                .collect(),
            Err(_) => Vec::new(),
        };
        if got != want {
            mismatches += 1;
        }
    }
    (mismatches, trials)
}

fn determinism(r: &mut Report, tmp: &Path, grasp: Vec<(String, Vec<u8>)>, extract: Vec<(String, Vec<u8>)>) {
    let (_, _) = run(config("grasp.json"), tmp.join("grasp_again"));
    let (_, _) = run(config("extract_vertical.json"), tmp.join("extract_again"));
    let mut pose = config("pose_windows.json");
    pose.seeds = vec![7];
    if let Some(p) = pose.pose.as_mut() {
        p.train.epochs = 3;
    }
    run(pose.clone(), tmp.join("pose_a"));
    run(pose, tmp.join("pose_b"));
    let same = [
        ("grasp", grasp == bytes(&tmp.join("grasp_again"))),
        ("extract", extract == bytes(&tmp.join("extract_again"))),
        ("pose", bytes(&tmp.join("pose_a")) == bytes(&tmp.join("pose_b"))),
    ];
    let detail: Vec<String> = same.iter().map(|(n, ok)| format!("{n} {}", if *ok { "identical" } else { "differs" })).collect();
    r.line("determinism", same.iter().all(|s| s.1), format!("rerun metric files: {}", detail.join(", ")));
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let mut r = Report { failed: Vec::new() };
    writeln!(std::io::stderr()).unwrap();
    reward_cases(&mut r);
    numerical_core(&mut r);
    let extract = extraction(&mut r, tmp.path());
    let grasp = grasp_trend(&mut r, tmp.path());
    determinism(&mut r, tmp.path(), grasp, extract);
    pose_gap(&mut r, tmp.path());
    window_trend(&mut r, tmp.path());
    assert!(r.failed.is_empty(), "failed criteria: {:?}", r.failed);
}

#[test]
fn peg_names_in_configs_are_known() {
    let c = config("extract_vertical.json").resolved().extract.unwrap();
    assert_eq!(c.targets, vec![PegProfile::Vertical]);
    assert_eq!(c.sources.len(), 3);
}
