use super::config::source_name;
use super::{config_hash, data_root, ExperimentKind, ExtractExperiment, GraspExperiment, PoseExperiment, RunConfig, ServiceError};
use crate::extract::{collect_demos, ExtractEnv, N_ACTIONS, OBSERVATION_SIZE};
use crate::grasp::{GraspEnv, OBSERVATION_SIZE as GRASP_OBSERVATION_SIZE};
use crate::nn::Network;
use crate::pose::{run_sweep, sweep_table_csv};
use crate::rl::{pretrain_from_demos, DemoRecord, DqnAgent, Environment, PpoAgent};
use crate::seed::derive_seed;
use crate::sim::PegProfile;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "run_config.json";

/// One finished training episode, streamed to observers while a run is live.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsEvent {
    /// Cell label: `grasp`, `pose`, or `<target>/<source>` for extraction.
    pub run: String,
    pub seed: u64,
    pub episode: usize,
    pub steps: usize,
    pub reward: f64,
    pub success: bool,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseWindowSummary {
    pub window: usize,
    pub lstm_mae: Option<f64>,
    pub lstm_r2: Option<f64>,
    pub ridge_mae: f64,
    pub ridge_r2: f64,
}

impl PoseWindowSummary {
    pub fn r2_gap(&self) -> Option<f64> {
        self.lstm_r2.map(|r| r - self.ridge_r2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSeedSummary {
    pub seed: u64,
    pub windows: Vec<PoseWindowSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSummary {
    pub seeds: Vec<PoseSeedSummary>,
    /// Per-window medians over seeds.
    pub median: Vec<PoseWindowSummary>,
    /// Median over seeds of the LSTM minus ridge R², per window.
    pub median_r2_gap: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspSeedSummary {
    pub seed: u64,
    pub episodes: usize,
    pub initial_steps: f64,
    pub final_steps: f64,
    pub ratio: f64,
    pub final_success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspSummary {
    pub seeds: Vec<GraspSeedSummary>,
    pub median_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractCell {
    pub target: PegProfile,
    pub source: String,
    /// Episodes to first success per seed, in seed order; `None` if the run
    /// never succeeded.
    pub episodes: Vec<Option<usize>>,
    /// Median with unsolved runs counted as `max_episodes + 1`.
    pub median: f64,
    pub min: usize,
    pub max: usize,
    pub solved: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub max_episodes: usize,
    pub cells: Vec<ExtractCell>,
}

impl ExtractSummary {
    pub fn cell(&self, target: PegProfile, source: &str) -> Option<&ExtractCell> {
        self.cells.iter().find(|c| c.target == target && c.source == source)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Summary {
    PoseSweep(PoseSummary),
    GraspPpo(GraspSummary),
    ExtractDqn(ExtractSummary),
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub summary: Summary,
    pub checks: Vec<Check>,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

fn write_csv(path: &Path, hash: &str, body: &str) -> Result<(), ServiceError> {
    std::fs::write(path, format!("# config_hash={hash}\n{body}"))?;
    Ok(())
}

fn env_failure(context: String) -> impl FnOnce(crate::rl::RlError) -> ServiceError {
    move |e| {
        log::error!("{context}: {e}");
        ServiceError::EnvFailure { context, message: e.to_string() }
    }
}

/// Runs `config` and writes its artifacts. Returns the output directory and
/// the summary.
pub fn run_experiment(config: &RunConfig) -> Result<(PathBuf, RunSummary), ServiceError> {
    run_experiment_with(config, &mut |_| {})
}

/// [`run_experiment`] that reports every finished episode to `observer`.
pub fn run_experiment_with(
    config: &RunConfig,
    observer: &mut dyn FnMut(&MetricsEvent),
) -> Result<(PathBuf, RunSummary), ServiceError> {
    config.validate()?;
    let resolved = config.resolved();
    let hash = config_hash(&resolved);
    let dir = config
        .output_dir
        .clone()
        .unwrap_or_else(|| data_root().join("runs").join(format!("{}-{}", config.experiment.name(), &hash[..12])));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(&resolved)? + "\n")?;
    log::info!("{} run {} into {}", config.experiment.name(), &hash[..12], dir.display());

    let summary = match config.experiment {
        ExperimentKind::PoseSweep => Summary::PoseSweep(run_pose(resolved.pose.as_ref().expect("resolved"), &config.seeds, &dir, &hash)?),
        ExperimentKind::GraspPpo => {
            Summary::GraspPpo(run_grasp(resolved.grasp.as_ref().expect("resolved"), &config.seeds, &dir, &hash, observer)?)
        }
        ExperimentKind::ExtractDqn => {
            Summary::ExtractDqn(run_extract(resolved.extract.as_ref().expect("resolved"), &config.seeds, &dir, &hash, observer)?)
        }
    };
    let checks = checks(&summary);
    let report = RunSummary { config_hash: hash, summary, checks };
    std::fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok((dir, report))
}

/// Loads a run directory, verifying that the summary and every CSV carry the
/// hash of the stored config.
pub fn load_run(dir: &Path) -> Result<(RunConfig, RunSummary), ServiceError> {
    let config = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let expected = config.hash();
    let summary: RunSummary = serde_json::from_str(&std::fs::read_to_string(dir.join(SUMMARY_FILE))?)?;
    if summary.config_hash != expected {
        return Err(ServiceError::HashMismatch { expected, found: summary.config_hash });
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let text = std::fs::read_to_string(&path)?;
            let found = text.lines().next().and_then(|l| l.strip_prefix("# config_hash=")).unwrap_or("").to_string();
            if found != expected {
                return Err(ServiceError::HashMismatch { expected, found });
            }
        }
    }
    Ok((config, summary))
}

fn run_pose(base: &PoseExperiment, seeds: &[u64], dir: &Path, hash: &str) -> Result<PoseSummary, ServiceError> {
    let mut per_seed = Vec::new();
    for &seed in seeds {
        let cfg = PoseExperiment { data_seed: derive_seed(seed, &["pose"]), ..base.clone() };
        let result = run_sweep(&cfg).map_err(|e| ServiceError::EnvFailure { context: format!("pose seed {seed}"), message: e.to_string() })?;
        write_csv(&dir.join(format!("pose_seed{seed}.csv")), hash, &sweep_table_csv(&result))?;
        let windows = result
            .rows
            .iter()
            .map(|r| PoseWindowSummary {
                window: r.window,
                lstm_mae: r.lstm.map(|m| m.mae.mean),
                lstm_r2: r.lstm.map(|m| m.r2.mean),
                ridge_mae: r.ridge.mae.mean,
                ridge_r2: r.ridge.r2.mean,
            })
            .collect();
        log::info!("pose seed {seed} done");
        per_seed.push(PoseSeedSummary { seed, windows });
    }
    let med = |f: &dyn Fn(&PoseWindowSummary) -> Option<f64>, i: usize| {
        let v: Vec<f64> = per_seed.iter().filter_map(|s| f(&s.windows[i])).collect();
        (!v.is_empty()).then(|| median(&v))
    };
    let mut medians = Vec::new();
    let mut gaps = Vec::new();
    for (i, &window) in base.window_sizes.iter().enumerate() {
        medians.push(PoseWindowSummary {
            window,
            lstm_mae: med(&|w| w.lstm_mae, i),
            lstm_r2: med(&|w| w.lstm_r2, i),
            ridge_mae: med(&|w| Some(w.ridge_mae), i).unwrap_or(f64::NAN),
            ridge_r2: med(&|w| Some(w.ridge_r2), i).unwrap_or(f64::NAN),
        });
        gaps.push(med(&|w| w.r2_gap(), i));
    }
    let mut table = String::from("window,lstm_mae,lstm_r2,ridge_mae,ridge_r2,r2_gap\n");
    for (m, g) in medians.iter().zip(&gaps) {
        let o = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        writeln!(table, "{},{},{},{},{},{}", m.window, o(m.lstm_mae), o(m.lstm_r2), m.ridge_mae, m.ridge_r2, o(*g)).unwrap();
    }
    write_csv(&dir.join("pose_median.csv"), hash, &table)?;
    Ok(PoseSummary { seeds: per_seed, median: medians, median_r2_gap: gaps })
}

fn run_grasp(
    cfg: &GraspExperiment,
    seeds: &[u64],
    dir: &Path,
    hash: &str,
    observer: &mut dyn FnMut(&MetricsEvent),
) -> Result<GraspSummary, ServiceError> {
    let mut out = Vec::new();
    for &seed in seeds {
        let mut env = GraspEnv::new(cfg.env.clone(), derive_seed(seed, &["grasp", "env"]))
            .map_err(|e| ServiceError::EnvFailure { context: format!("grasp seed {seed}"), message: e.to_string() })?;
        let ppo = crate::rl::PpoConfig { seed: derive_seed(seed, &["grasp", "agent"]), ..cfg.ppo.clone() };
        let mut agent = PpoAgent::new(GRASP_OBSERVATION_SIZE, env.action_space(), ppo).map_err(env_failure(format!("grasp seed {seed}")))?;
        let mut episodes = Vec::new();
        for it in 0..cfg.iterations {
            let run = agent.train(&mut env, 1).map_err(env_failure(format!("grasp seed {seed} iteration {it}")))?;
            for e in run.episodes {
                let episode = episodes.len();
                observer(&MetricsEvent { run: "grasp".into(), seed, episode, steps: e.steps, reward: e.reward, success: e.success, epsilon: None });
                episodes.push(crate::rl::EpisodeLog { episode, ..e });
            }
        }
        let steps: Vec<f64> = episodes.iter().map(|e| e.steps as f64).collect();
        let w = cfg.moving_average.min(steps.len()).max(1);
        let ma = crate::rl::moving_average(&steps, w);
        let mut csv = String::from("episode,steps,reward,success,steps_ma\n");
        for (e, m) in episodes.iter().zip(&ma) {
            writeln!(csv, "{},{},{},{},{}", e.episode, e.steps, e.reward, e.success as u8, m).unwrap();
        }
        write_csv(&dir.join(format!("grasp_seed{seed}.csv")), hash, &csv)?;
        let initial = mean(&steps[..w]);
        let fin = mean(&steps[steps.len() - w..]);
        let final_success_rate = episodes[episodes.len() - w..].iter().filter(|e| e.success).count() as f64 / w as f64;
        log::info!("grasp seed {seed}: {} episodes, steps {initial:.2} -> {fin:.2}", episodes.len());
        out.push(GraspSeedSummary { seed, episodes: episodes.len(), initial_steps: initial, final_steps: fin, ratio: fin / initial, final_success_rate });
    }
    let median_ratio = median(&out.iter().map(|s| s.ratio).collect::<Vec<_>>());
    Ok(GraspSummary { seeds: out, median_ratio })
}

fn demo_yaws(cfg: &ExtractExperiment, peg: PegProfile) -> Vec<f64> {
    match peg {
        PegProfile::Vertical => vec![0.0],
        _ => cfg.demo_yaws_deg.clone(),
    }
}

fn collect(cfg: &ExtractExperiment, peg: PegProfile, seed: u64) -> Result<Vec<DemoRecord>, ServiceError> {
    let yaws = demo_yaws(cfg, peg);
    let sessions = collect_demos(&cfg.env, peg, &yaws, cfg.demo_sessions_per_yaw, derive_seed(seed, &["extract", "demos"]), None)
        .map_err(|e| ServiceError::EnvFailure { context: format!("demos {} seed {seed}", peg.name()), message: e.to_string() })?;
    Ok(sessions.into_iter().flat_map(|s| s.records).collect())
}

fn run_extract(
    cfg: &ExtractExperiment,
    seeds: &[u64],
    dir: &Path,
    hash: &str,
    observer: &mut dyn FnMut(&MetricsEvent),
) -> Result<ExtractSummary, ServiceError> {
    let mut results: BTreeMap<(usize, usize), Vec<Option<usize>>> = BTreeMap::new();
    let mut runs_csv = String::from("target,source,seed,episodes_to_success,episodes_run\n");
    let mut episodes_csv = String::from("target,source,seed,episode,steps,reward,success,epsilon\n");
    for &seed in seeds {
        let mut demos: BTreeMap<PegProfile, Vec<DemoRecord>> = BTreeMap::new();
        let mut policies: Vec<Option<Network>> = Vec::new();
        for source in &cfg.sources {
            if source.is_empty() {
                policies.push(None);
                continue;
            }
            let mut records = Vec::new();
            for &peg in source {
                if !demos.contains_key(&peg) {
                    demos.insert(peg, collect(cfg, peg, seed)?);
                }
                records.extend(demos[&peg].iter().cloned());
            }
            let name = source_name(source);
            let pcfg = crate::rl::PretrainConfig { seed: derive_seed(seed, &["extract", "pretrain", &name]), ..cfg.pretrain.clone() };
            let (net, report) = pretrain_from_demos(&records, &pcfg).map_err(env_failure(format!("pretrain {name} seed {seed}")))?;
            log::info!("pretrained on {name} ({} demos), accuracy {:.3}", records.len(), report.accuracy);
            policies.push(Some(net));
        }
        for (ti, &target) in cfg.targets.iter().enumerate() {
            for (si, source) in cfg.sources.iter().enumerate() {
                let name = source_name(source);
                let label = format!("{}/{name}", target.name());
                let mut env = ExtractEnv::new(cfg.env.clone(), target, cfg.target_yaw_deg, derive_seed(seed, &["extract", "env", target.name()]))
                    .map_err(|e| ServiceError::EnvFailure { context: label.clone(), message: e.to_string() })?;
                let agent_seed = derive_seed(seed, &["extract", "agent", target.name()]);
                let mut agent = match &policies[si] {
                    None => DqnAgent::new(OBSERVATION_SIZE, N_ACTIONS, crate::rl::DqnConfig { seed: agent_seed, ..cfg.scratch.clone() }),
                    Some(net) => DqnAgent::from_pretrained(net, crate::rl::DqnConfig { seed: agent_seed, ..cfg.pretrained.clone() }),
                }
                .map_err(env_failure(label.clone()))?;
                let mut first = None;
                let mut episode = 0;
                while episode < cfg.max_episodes && first.is_none() {
                    let run = agent.train(&mut env, 1, false).map_err(env_failure(format!("{label} seed {seed} episode {episode}")))?;
                    let e = &run.episodes[0];
                    let eps = run.epsilon[0];
                    writeln!(episodes_csv, "{},{name},{seed},{episode},{},{},{},{eps}", target.name(), e.steps, e.reward, e.success as u8).unwrap();
                    observer(&MetricsEvent { run: label.clone(), seed, episode, steps: e.steps, reward: e.reward, success: e.success, epsilon: Some(eps) });
                    if e.success {
                        first = Some(episode + 1);
                    }
                    episode += 1;
                }
                writeln!(runs_csv, "{},{name},{seed},{},{episode}", target.name(), first.map_or(String::new(), |v| v.to_string())).unwrap();
                log::info!("{label} seed {seed}: {first:?}");
                results.entry((ti, si)).or_default().push(first);
            }
        }
    }
    let mut cells = Vec::new();
    let mut matrix = String::from("target,source,median,min,max,solved,runs\n");
    for ((ti, si), episodes) in results {
        let censored: Vec<usize> = episodes.iter().map(|e| e.unwrap_or(cfg.max_episodes + 1)).collect();
        let cell = ExtractCell {
            target: cfg.targets[ti],
            source: source_name(&cfg.sources[si]),
            median: median(&censored.iter().map(|&v| v as f64).collect::<Vec<_>>()),
            min: *censored.iter().min().expect("seeds"),
            max: *censored.iter().max().expect("seeds"),
            solved: episodes.iter().filter(|e| e.is_some()).count(),
            episodes,
        };
        writeln!(matrix, "{},{},{},{},{},{},{}", cell.target.name(), cell.source, cell.median, cell.min, cell.max, cell.solved, cell.episodes.len()).unwrap();
        cells.push(cell);
    }
    write_csv(&dir.join("extract_runs.csv"), hash, &runs_csv)?;
    write_csv(&dir.join("extract_episodes.csv"), hash, &episodes_csv)?;
    write_csv(&dir.join("transfer_matrix.csv"), hash, &matrix)?;
    Ok(ExtractSummary { max_episodes: cfg.max_episodes, cells })
}

/// Pass/fail checks that apply to a summary.
///
/// * Pose, single window: median LSTM R² exceeds ridge by at least 0.05.
/// * Pose, windows 5/20/40/60 present: MAE(40) ≤ MAE(5) and
///   |MAE(60) − MAE(40)| < |MAE(20) − MAE(5)| on median LSTM MAE.
/// * Grasp: every seed has at least 300 episodes and the median ratio of
///   final to initial moving-average steps is at most 0.6.
/// * Extraction on the vertical peg: same-peg pretraining median at most
///   0.7 × scratch, and curved-peg pretraining median at most scratch.
pub fn checks(summary: &Summary) -> Vec<Check> {
    let mut out = Vec::new();
    match summary {
        Summary::PoseSweep(p) => {
            if p.median.len() == 1 {
                if let Some(g) = p.median_r2_gap[0] {
                    out.push(Check {
                        name: "lstm_r2_gap".into(),
                        passed: g >= 0.05,
                        detail: format!("median R² gap {g:.4} at W={} (need ≥ 0.05)", p.median[0].window),
                    });
                }
            }
            let mae = |w: usize| p.median.iter().find(|m| m.window == w).and_then(|m| m.lstm_mae);
            if let (Some(m5), Some(m20), Some(m40), Some(m60)) = (mae(5), mae(20), mae(40), mae(60)) {
                let passed = m40 <= m5 && (m60 - m40).abs() < (m20 - m5).abs();
                out.push(Check {
                    name: "window_trend".into(),
                    passed,
                    detail: format!("MAE W=5 {m5:.4}, 20 {m20:.4}, 40 {m40:.4}, 60 {m60:.4}"),
                });
            }
        }
        Summary::GraspPpo(g) => {
            let min_episodes = g.seeds.iter().map(|s| s.episodes).min().unwrap_or(0);
            out.push(Check {
                name: "grasp_steps_trend".into(),
                passed: min_episodes >= 300 && g.median_ratio <= 0.6,
                detail: format!("median final/initial steps {:.3} (need ≤ 0.6), fewest episodes {min_episodes} (need ≥ 300)", g.median_ratio),
            });
        }
        Summary::ExtractDqn(x) => {
            if let Some(scratch) = x.cell(PegProfile::Vertical, "scratch") {
                if let Some(same) = x.cell(PegProfile::Vertical, "vertical") {
                    out.push(Check {
                        name: "pretraining_speedup".into(),
                        passed: same.median <= 0.7 * scratch.median,
                        detail: format!("vertical peg median {} pretrained vs {} scratch (need ≤ 0.7×)", same.median, scratch.median),
                    });
                }
                if let Some(curved) = x.cell(PegProfile::Vertical, "curved") {
                    out.push(Check {
                        name: "curved_transfer".into(),
                        passed: curved.median <= scratch.median,
                        detail: format!("vertical peg median {} after curved pretraining vs {} scratch", curved.median, scratch.median),
                    });
                }
            }
        }
    }
    out
}
