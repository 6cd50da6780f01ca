use clap::{Args, Parser, Subcommand};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tactile_workbench::extract::{collect_demos, read_session, ExtractConfig, ExtractEnv, N_ACTIONS, OBSERVATION_SIZE, PLACEMENT_YAWS_DEG};
use tactile_workbench::pose::{build_dataset, generate_runs, SweepConfig};
use tactile_workbench::rl::{pretrain_from_demos, DqnAgent, DqnConfig, PretrainConfig};
use tactile_workbench::sensors::{simulate_streams, write_stream_file, write_windows_csv, RotationTrial, StreamConfig, StreamHeader};
use tactile_workbench::service::{
    config_hash, data_root, load_run, run_experiment_with, ExperimentKind, PolicyDocument, RunConfig, RunSummary, Server, ServerConfig,
    Summary,
};
use tactile_workbench::sim::{ObjectSpec, PegProfile, WorldConfig};

type Error = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(name = "workbench", version, about = "Simulated tactile-manipulation workbench")]
struct Cli {
    /// Log level (error, warn, info, debug).
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic sensor data.
    Simgen {
        #[command(subcommand)]
        what: Simgen,
    },
    /// Object-angle estimation.
    Pose {
        #[command(subcommand)]
        what: Pose,
    },
    /// PPO grasp-approach refinement.
    Grasp {
        #[command(subcommand)]
        what: Grasp,
    },
    /// Demonstration-pretrained DQN peg extraction.
    Extract {
        #[command(subcommand)]
        what: Extract,
    },
    /// Serve live teleoperation and monitoring over WebSocket.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Run this experiment config in the background and stream its
        /// episodes as metrics updates.
        #[arg(long)]
        train: Option<PathBuf>,
    },
    /// Print the summary and checks of finished runs.
    Report {
        /// Run directories; defaults to every run under the data root.
        runs: Vec<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Simgen {
    /// Simulate one rotation recording to JSONL.
    Streams {
        /// Cylinder diameter (m).
        #[arg(long, default_value_t = 0.065)]
        diameter: f64,
        #[arg(long, default_value_t = 8.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write frame-anchored windows of this many samples as CSV.
        #[arg(long, requires = "windows_out")]
        window: Option<usize>,
        #[arg(long)]
        windows_out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run config (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 1 when an acceptance check fails.
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand)]
enum Pose {
    /// LSTM and baseline sweep over window sizes.
    Sweep(RunArgs),
}

#[derive(Subcommand)]
enum Grasp {
    Train(RunArgs),
}

#[derive(Subcommand)]
enum Extract {
    /// Record scripted teleoperation sessions.
    Demos {
        #[arg(long)]
        peg: PegProfile,
        /// Comma-separated placement yaws (deg).
        #[arg(long, value_delimiter = ',')]
        yaws: Option<Vec<f64>>,
        #[arg(long, default_value_t = 3)]
        sessions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to `<data root>/demos`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Behavior-clone a policy from demo files or directories.
    Pretrain {
        #[arg(long, required = true, num_args = 1..)]
        demos: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Without --peg: the pretrained-vs-scratch matrix from a run config.
    /// With --peg: one DQN run, optionally from a pretrained policy.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        peg: Option<PegProfile>,
        #[arg(long, requires = "peg")]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        yaw: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 600)]
        episodes: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).init();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Simgen { what: Simgen::Streams { diameter, duration, seed, out, window, windows_out } } => {
            simgen(diameter, duration, seed, &out, window.zip(windows_out))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Pose { what: Pose::Sweep(args) } => experiment(ExperimentKind::PoseSweep, args),
        Command::Grasp { what: Grasp::Train(args) } => experiment(ExperimentKind::GraspPpo, args),
        Command::Extract { what } => match what {
            Extract::Demos { peg, yaws, sessions, seed, out } => {
                let dir = out.unwrap_or_else(|| data_root().join("demos"));
                std::fs::create_dir_all(&dir)?;
                let yaws = yaws.unwrap_or_else(|| PLACEMENT_YAWS_DEG.to_vec());
                let s = collect_demos(&ExtractConfig::default(), peg, &yaws, sessions, seed, Some(&dir))?;
                let records: usize = s.iter().map(|s| s.records.len()).sum();
                println!("{} sessions, {records} records in {}", s.len(), dir.display());
                Ok(ExitCode::SUCCESS)
            }
            Extract::Pretrain { demos, out, epochs, seed } => {
                pretrain(&demos, &out, epochs, seed)?;
                Ok(ExitCode::SUCCESS)
            }
            Extract::Train { run, peg: None, .. } => experiment(ExperimentKind::ExtractDqn, run),
            Extract::Train { run, peg: Some(peg), weights, yaw, seed, episodes } => {
                train_single(peg, weights.as_deref(), yaw, seed, episodes, run.out.as_deref())?;
                Ok(ExitCode::SUCCESS)
            }
        },
        Command::Serve { port, bind, train } => {
            serve(&bind, port, train.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { runs } => report(runs),
    }
}

fn simgen(diameter: f64, duration: f64, seed: u64, out: &Path, windows: Option<(usize, PathBuf)>) -> Result<(), Error> {
    let trial = RotationTrial::new(ObjectSpec::cylinder(diameter), duration, seed);
    let (stream, world) = (StreamConfig::default(), WorldConfig::default());
    let s = simulate_streams(&trial, &stream, &world)?;
    let header = StreamHeader::new(trial, stream, world);
    write_stream_file(BufWriter::new(File::create(out)?), &header, &[&s.camera, &s.pressure, &s.marg])?;
    println!(
        "{}: {} camera, {} pressure, {} marg samples",
        out.display(),
        s.camera.samples.len(),
        s.pressure.samples.len(),
        s.marg.samples.len()
    );
    if let Some((w, path)) = windows {
        let cfg = SweepConfig { diameters: vec![diameter], runs_per_object: 1, run_duration: duration, data_seed: seed, ..SweepConfig::default() };
        let runs = generate_runs(&cfg)?;
        let data = build_dataset(&runs, w, cfg.anchor)?;
        let mut f = BufWriter::new(File::create(&path)?);
        writeln!(f, "# config_hash={}", header.config_hash)?;
        write_windows_csv(&mut f, &data)?;
        f.flush()?;
        println!("{}: {} windows of {w}", path.display(), data.len());
    }
    Ok(())
}

fn experiment(kind: ExperimentKind, args: RunArgs) -> Result<ExitCode, Error> {
    let mut config = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::new(kind),
    };
    if config.experiment != kind {
        return Err(format!("config is for {}, not {}", config.experiment.name(), kind.name()).into());
    }
    if let Some(out) = args.out {
        config.output_dir = Some(out);
    }
    let (dir, summary) = run_experiment_with(&config, &mut |_| {})?;
    print_summary(&dir, &summary);
    Ok(if args.check && !summary.passed() { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn demo_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Error> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> =
                std::fs::read_dir(p)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|f| f.extension().is_some_and(|x| x == "jsonl")).collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn pretrain(demos: &[PathBuf], out: &Path, epochs: Option<usize>, seed: u64) -> Result<(), Error> {
    let files = demo_files(demos)?;
    let mut records = Vec::new();
    for f in &files {
        records.extend(read_session(f)?.records);
    }
    let mut cfg = PretrainConfig { seed, ..PretrainConfig::default() };
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    let (net, report) = pretrain_from_demos(&records, &cfg)?;
    let names = files.iter().map(|f| f.display().to_string()).collect();
    PolicyDocument::new(cfg, names, records.len(), report.accuracy, &net).save(out)?;
    println!(
        "{} records from {} files, final loss {:.4}, demo accuracy {:.3} -> {}",
        records.len(),
        files.len(),
        report.loss.last().copied().unwrap_or(f64::NAN),
        report.accuracy,
        out.display()
    );
    Ok(())
}

fn train_single(peg: PegProfile, weights: Option<&Path>, yaw: f64, seed: u64, episodes: usize, out: Option<&Path>) -> Result<(), Error> {
    let env_cfg = ExtractConfig::default();
    let mut env = ExtractEnv::new(env_cfg.clone(), peg, yaw, seed)?;
    let (mut agent, policy_hash) = match weights {
        Some(w) => {
            let (doc, net) = PolicyDocument::load(w)?;
            (DqnAgent::from_pretrained(&net, DqnConfig { seed, ..DqnConfig::pretrained() })?, Some(doc.config_hash))
        }
        None => (DqnAgent::new(OBSERVATION_SIZE, N_ACTIONS, DqnConfig { seed, ..DqnConfig::default() })?, None),
    };
    let run = agent.train(&mut env, episodes, true)?;
    match run.episodes_to_success() {
        Some(n) => println!("{} peg extracted after {n} episodes", peg.name()),
        None => println!("{} peg not extracted in {episodes} episodes", peg.name()),
    }
    if let Some(path) = out {
        let hash = config_hash(&(&env_cfg, agent.config(), peg, yaw, seed, &policy_hash));
        let mut f = BufWriter::new(File::create(path)?);
        writeln!(f, "# config_hash={hash}")?;
        writeln!(f, "episode,steps,reward,success,epsilon")?;
        for (e, eps) in run.episodes.iter().zip(&run.epsilon) {
            writeln!(f, "{},{},{},{},{eps}", e.episode, e.steps, e.reward, e.success as u8)?;
        }
        f.flush()?;
    }
    Ok(())
}

fn serve(bind: &str, port: u16, train: Option<&Path>) -> Result<(), Error> {
    let config = ServerConfig { bind: format!("{bind}:{port}"), ..ServerConfig::default() };
    let server = Server::bind(config)?;
    println!("listening on ws://{}", server.local_addr()?);
    let handle = server.spawn()?;
    if let Some(path) = train {
        let run = RunConfig::load(path)?;
        let publish = handle.metrics_publisher();
        std::thread::spawn(move || match run_experiment_with(&run, &mut |e| publish(e)) {
            Ok((dir, s)) => print_summary(&dir, &s),
            Err(e) => log::error!("training run failed: {e}"),
        });
    }
    loop {
        std::thread::park();
    }
}

fn report(runs: Vec<PathBuf>) -> Result<ExitCode, Error> {
    let runs = if runs.is_empty() {
        let root = data_root().join("runs");
        let mut dirs: Vec<PathBuf> = match std::fs::read_dir(&root) {
            Ok(d) => d.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect(),
            Err(_) => Vec::new(),
        };
        dirs.sort();
        dirs
    } else {
        runs
    };
    if runs.is_empty() {
        println!("no runs found");
    }
    let mut all = true;
    for dir in runs {
        match load_run(&dir) {
            Ok((_, summary)) => {
                all &= summary.passed();
                print_summary(&dir, &summary);
            }
            Err(e) => {
                all = false;
                println!("{}: {e}", dir.display());
            }
        }
    }
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn print_summary(dir: &Path, s: &RunSummary) {
    println!("{} (config {})", dir.display(), &s.config_hash[..12]);
    match &s.summary {
        Summary::PoseSweep(p) => {
            println!("  window  lstm_mae  lstm_r2  ridge_mae  ridge_r2");
            for m in &p.median {
                let o = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
                println!("  {:>6}  {:>8}  {:>7}  {:>9.4}  {:>8.4}", m.window, o(m.lstm_mae), o(m.lstm_r2), m.ridge_mae, m.ridge_r2);
            }
        }
        Summary::GraspPpo(g) => {
            for x in &g.seeds {
                println!("  seed {}: {} episodes, steps {:.2} -> {:.2} (ratio {:.3})", x.seed, x.episodes, x.initial_steps, x.final_steps, x.ratio);
            }
        }
        Summary::ExtractDqn(x) => {
            println!("  target    source                    median  min  max  solved");
            for c in &x.cells {
                println!("  {:<8}  {:<24}  {:>6}  {:>3}  {:>3}  {}/{}", c.target.name(), c.source, c.median, c.min, c.max, c.solved, c.episodes.len());
            }
        }
    }
    for c in &s.checks {
        println!("  [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}
