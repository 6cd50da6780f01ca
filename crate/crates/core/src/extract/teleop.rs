//! Teleoperation sessions and demonstration files.
//!
//! A session file is JSON Lines: a [`SessionHeader`] on the first line, then
//! one [`DemoRecord`] per keypress (the observation before the key and the
//! one-hot action). Every line is flushed as it is written, so an interrupted
//! session leaves a readable prefix.

use super::{ExtractAction, ExtractConfig, ExtractEnv, ExtractObservation, N_ACTIONS, PRESSURE_INDICES};
use crate::rl::{DemoRecord, RlError};
use crate::service::config_hash;
use crate::sim::{PegProfile, SimError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const SESSION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TeleopError {
    #[error("no recording session is open")]
    SessionClosed,
    #[error("a recording session is already open")]
    AlreadyRecording,
    #[error("unknown key token {0:?}")]
    UnknownKey(String),
    #[error("session was recorded under config {recorded}, replaying under {current}")]
    ConfigMismatch { recorded: String, current: String },
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionHeader {
    pub format_version: u32,
    pub peg: PegProfile,
    pub yaw_deg: f64,
    /// Environment seed and the episode index the recording started from.
    pub seed: u64,
    pub episode: u64,
    pub timestamp: String,
    /// Hash of the environment config the session was recorded under.
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSession {
    pub header: SessionHeader,
    pub records: Vec<DemoRecord>,
}

impl DemoSession {
    pub fn validate(&self) -> Result<(), TeleopError> {
        for (i, r) in self.records.iter().enumerate() {
            let bad = |m: &str| TeleopError::Format { line: i + 2, message: m.to_string() };
            if r.action.len() != N_ACTIONS || r.action_index().is_none() {
                return Err(bad("action is not one-hot"));
            }
            if r.obs.len() != super::OBSERVATION_SIZE {
                return Err(bad("observation has the wrong width"));
            }
            if PRESSURE_INDICES.iter().any(|&k| !(0.0..=1.0).contains(&r.obs[k])) {
                return Err(bad("pressure outside [0, 1]"));
            }
        }
        Ok(())
    }
}

struct Recorder {
    header: SessionHeader,
    path: Option<PathBuf>,
    writer: Option<BufWriter<File>>,
    records: Vec<DemoRecord>,
}

impl Recorder {
    fn write_line(&mut self, json: &str) -> Result<(), TeleopError> {
        if let Some(w) = &mut self.writer {
            w.write_all(json.as_bytes())?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(())
    }
}

/// A live environment driven by key tokens, optionally recording.
pub struct TeleopSession {
    env: ExtractEnv,
    obs: ExtractObservation,
    recorder: Option<Recorder>,
}

impl TeleopSession {
    pub fn new(mut env: ExtractEnv) -> Result<Self, TeleopError> {
        let obs = env.reset_episode()?;
        Ok(Self { env, obs, recorder: None })
    }

    pub fn env(&self) -> &ExtractEnv {
        &self.env
    }

    pub fn observation(&self) -> &ExtractObservation {
        &self.obs
    }

    pub fn is_recording(&self) -> bool {
        self.recorder.is_some()
    }

    /// Records in the open recording, 0 when none is open.
    pub fn records(&self) -> usize {
        self.recorder.as_ref().map_or(0, |r| r.records.len())
    }

    pub fn reset(&mut self) -> Result<(), TeleopError> {
        self.obs = self.env.reset_episode()?;
        Ok(())
    }

    /// Starts a fresh episode and records it, to `path` when given.
    pub fn start_recording(&mut self, path: Option<&Path>, timestamp: &str) -> Result<(), TeleopError> {
        if self.recorder.is_some() {
            return Err(TeleopError::AlreadyRecording);
        }
        let episode = self.env.next_episode();
        self.obs = self.env.reset_episode()?;
        let header = SessionHeader {
            format_version: SESSION_FORMAT_VERSION,
            peg: self.env.peg(),
            yaw_deg: self.env.yaw_deg(),
            seed: self.env.seed(),
            episode,
            timestamp: timestamp.to_string(),
            config_hash: config_hash(self.env.config()),
        };
        let writer = match path {
            Some(p) => Some(BufWriter::new(File::create(p)?)),
            None => None,
        };
        let mut rec = Recorder { header, path: path.map(Path::to_path_buf), writer, records: Vec::new() };
        let line = serde_json::to_string(&rec.header).map_err(|e| TeleopError::Format { line: 1, message: e.to_string() })?;
        rec.write_line(&line)?;
        self.recorder = Some(rec);
        Ok(())
    }

    /// Applies a key and appends the demo record to the open recording.
    pub fn key(&mut self, token: &str) -> Result<(ExtractObservation, f64, bool), TeleopError> {
        let action: ExtractAction = token.parse().map_err(|_| TeleopError::UnknownKey(token.to_string()))?;
        self.apply(action)
    }

    pub fn apply(&mut self, action: ExtractAction) -> Result<(ExtractObservation, f64, bool), TeleopError> {
        let rec = self.recorder.as_mut().ok_or(TeleopError::SessionClosed)?;
        let before = self.obs;
        let out = self.env.step_action(action)?;
        let record = DemoRecord::new(before.to_vec(), action.index(), N_ACTIONS);
        let line = serde_json::to_string(&record).map_err(|e| TeleopError::Format { line: rec.records.len() + 2, message: e.to_string() })?;
        rec.write_line(&line)?;
        rec.records.push(record);
        self.obs = out.0;
        Ok(out)
    }

    /// Closes the recording and returns its contents and file path.
    pub fn stop_recording(&mut self) -> Result<(DemoSession, Option<PathBuf>), TeleopError> {
        let rec = self.recorder.take().ok_or(TeleopError::SessionClosed)?;
        Ok((DemoSession { header: rec.header, records: rec.records }, rec.path))
    }
}

pub fn write_session(session: &DemoSession, path: &Path) -> Result<(), TeleopError> {
    let mut w = BufWriter::new(File::create(path)?);
    let json = |v: Result<String, serde_json::Error>| v.map_err(|e| TeleopError::Format { line: 0, message: e.to_string() });
    writeln!(w, "{}", json(serde_json::to_string(&session.header))?)?;
    for r in &session.records {
        writeln!(w, "{}", json(serde_json::to_string(r))?)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a session file. A final line cut off mid-write is dropped with a
/// warning; malformed complete lines are errors.
pub fn read_session(path: &Path) -> Result<DemoSession, TeleopError> {
    let text = std::fs::read_to_string(path)?;
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let header_line = lines.first().ok_or(TeleopError::Format { line: 1, message: "missing header".into() })?;
    let header: SessionHeader =
        serde_json::from_str(header_line).map_err(|e| TeleopError::Format { line: 1, message: e.to_string() })?;
    if header.format_version != SESSION_FORMAT_VERSION {
        return Err(TeleopError::Format { line: 1, message: format!("unsupported format version {}", header.format_version) });
    }
    let mut records = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DemoRecord>(line) {
            Ok(r) => records.push(r),
            Err(_) if i == lines.len() - 1 && !complete => {
                log::warn!("{}: dropping truncated final line", path.display());
            }
            Err(e) => return Err(TeleopError::Format { line: i + 1, message: e.to_string() }),
        }
    }
    let session = DemoSession { header, records };
    session.validate()?;
    Ok(session)
}

/// Reads a session file line by line without loading it whole.
pub fn read_records(path: &Path) -> Result<Vec<DemoRecord>, TeleopError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate().skip(1) {
        let line = line?;
        if let Ok(r) = serde_json::from_str(&line) {
            out.push(r);
        } else if !line.trim().is_empty() {
            return Err(TeleopError::Format { line: i + 1, message: "not a demo record".into() });
        }
    }
    Ok(out)
}

/// Replays a session's actions headlessly and returns the index of the first
/// record whose observation differs from the regenerated one, if any.
pub fn replay_session(session: &DemoSession, config: &ExtractConfig) -> Result<Option<usize>, TeleopError> {
    let h = &session.header;
    let current = config_hash(config);
    if h.config_hash != current {
        return Err(TeleopError::ConfigMismatch { recorded: h.config_hash.clone(), current });
    }
    let mut env = ExtractEnv::new(config.clone(), h.peg, h.yaw_deg, h.seed)?;
    let mut obs = env.reset_to(h.episode)?.to_vec();
    for (i, r) in session.records.iter().enumerate() {
        if r.obs != obs {
            return Ok(Some(i));
        }
        let a = r.action_index().and_then(ExtractAction::from_index).ok_or(RlError::ActionMismatch)?;
        obs = env.step_action(a)?.0.to_vec();
    }
    Ok(None)
}

const PREFERENCE: [ExtractAction; N_ACTIONS] = [
    ExtractAction::PlusZ,
    ExtractAction::PlusX,
    ExtractAction::MinusX,
    ExtractAction::PlusRotY,
    ExtractAction::MinusRotY,
    ExtractAction::PlusRotZ,
    ExtractAction::MinusRotZ,
    ExtractAction::MinusZ,
];

/// One-step lookahead. A move with positive reward wins outright (largest
/// first). Otherwise the operator accepts friction and takes the non-jammed
/// move that rises most, then the best reward, then the lowest pressure, then
/// the habitual preference (up first).
pub fn scripted_action(env: &ExtractEnv) -> ExtractAction {
    let before = env.rise();
    let mut best: Option<([f64; 5], ExtractAction)> = None;
    for a in PREFERENCE {
        let mut probe = env.clone();
        let Ok((_, reward, _)) = probe.step_action(a) else { continue };
        let info = probe.last_info();
        let jammed = info.map_or(false, |i| i.jammed || i.workspace_limited);
        let pressure = info.map_or(0.0, |i| i.max_pressure);
        let gain = probe.rise() - before;
        let positive = if reward > 1e-12 { reward } else { 0.0 };
        let key = [positive, if jammed { 0.0 } else { 1.0 }, gain, reward, -pressure];
        let better = match &best {
            None => true,
            Some((k, _)) => key.iter().zip(k).find(|(x, y)| (*x - *y).abs() > 1e-9).map_or(false, |(x, y)| x > y),
        };
        if better {
            best = Some((key, a));
        }
    }
    best.map_or(ExtractAction::PlusZ, |b| b.1)
}

/// Simulated human operator: lookahead keys with an occasional slip.
#[derive(Debug, Clone)]
pub struct ScriptedOperator {
    rng: ChaCha8Rng,
    pub slip_probability: f64,
}

impl ScriptedOperator {
    pub fn new(seed: u64, slip_probability: f64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), slip_probability }
    }

    pub fn choose(&mut self, env: &ExtractEnv) -> ExtractAction {
        if self.rng.gen::<f64>() < self.slip_probability {
            ExtractAction::ALL[self.rng.gen_range(0..N_ACTIONS)]
        } else {
            scripted_action(env)
        }
    }
}

/// Records `sessions_per_yaw` scripted sessions at each yaw. With `dir`, each
/// session is also written to `<peg>_yaw<deg>_s<k>.jsonl`.
pub fn collect_demos(
    config: &ExtractConfig,
    peg: PegProfile,
    yaws_deg: &[f64],
    sessions_per_yaw: usize,
    seed: u64,
    dir: Option<&Path>,
) -> Result<Vec<DemoSession>, TeleopError> {
    let mut out = Vec::new();
    for &yaw in yaws_deg {
        for k in 0..sessions_per_yaw {
            let s = crate::seed::derive_seed(seed, &["demo", peg.name(), &format!("{yaw}"), &k.to_string()]);
            let env = ExtractEnv::new(config.clone(), peg, yaw, s)?;
            let mut session = TeleopSession::new(env)?;
            let path = dir.map(|d| d.join(format!("{}_yaw{}_s{}.jsonl", peg.name(), yaw.round() as i64, k)));
            session.start_recording(path.as_deref(), &format!("scripted-{s:016x}"))?;
            let mut operator = ScriptedOperator::new(s, 0.05);
            while !session.env().is_done() {
                let a = operator.choose(session.env());
                session.apply(a)?;
            }
            out.push(session.stop_recording()?.0);
        }
    }
    Ok(out)
}
