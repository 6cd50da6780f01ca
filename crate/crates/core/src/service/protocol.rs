//! Live session wire protocol, version 1.
//!
//! Every WebSocket text frame holds one JSON object with exactly three keys,
//! in this order: `seq`, `type`, `payload`. See `docs/protocol.md` for the
//! byte-level description and examples.

use crate::extract::{ExtractObservation, StepInfo};
use crate::sim::PegProfile;
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    pub protocol_version: u32,
    /// Free-form peer name, e.g. `teleop-ui/0.3` or `workbench/0.1.0`.
    pub agent: String,
    /// Set by the server: the id it assigned to this connection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connection: Option<u64>,
}

/// Full render state of the live environment. Frame numbers increase by one
/// per broadcast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSnapshot {
    pub frame: u64,
    pub peg: PegProfile,
    pub yaw_deg: f64,
    pub episode: u64,
    pub step: usize,
    pub done: bool,
    pub succeeded: bool,
    pub recording: bool,
    pub records: usize,
    /// Connection holding the teleop claim.
    pub writer: Option<u64>,
    /// Tool position in the hole frame (m).
    pub position: [f64; 3],
    /// Tool orientation relative to the hole, scalar-first quaternion.
    pub orientation: [f64; 4],
    pub pressures: [f64; 2],
    /// Per-module orientation change since the previous step.
    pub deltas: [[f64; 4]; 2],
    pub rise: f64,
    pub goal_rise: f64,
    pub last_action: Option<String>,
    pub last_reward: Option<f64>,
    pub jammed: bool,
}

impl StateSnapshot {
    pub fn observation(&self) -> ExtractObservation {
        ExtractObservation { position: self.position, orientation: self.orientation, pressures: self.pressures, deltas: self.deltas }
    }

    pub fn set_info(&mut self, info: Option<StepInfo>) {
        self.jammed = info.is_some_and(|i| i.jammed);
        self.last_action = info.map(|i| i.action.token().to_string());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeleopKey {
    /// One of `+x -x +z -z +ry -ry +rz -rz`.
    pub key: String,
}

/// Client request to record a fresh episode; the server echoes it with the
/// demo file path filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordStart {
    pub peg: PegProfile,
    pub yaw_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

/// Client request is empty; the server reply names the closed file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordStop {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsUpdate {
    pub run: String,
    pub seed: u64,
    pub episode: usize,
    pub steps: usize,
    pub reward: f64,
    pub success: bool,
    pub epsilon: Option<f64>,
}

impl From<&super::MetricsEvent> for MetricsUpdate {
    fn from(e: &super::MetricsEvent) -> Self {
        Self { run: e.run.clone(), seed: e.seed, episode: e.episode, steps: e.steps, reward: e.reward, success: e.success, epsilon: e.epsilon }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadMessage,
    UnsupportedVersion,
    BadSeq,
    ConcurrentWriter,
    SessionClosed,
    AlreadyRecording,
    UnknownKey,
    EpisodeDone,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorPayload {
    pub code: ErrorCode,
    pub message: String,
    /// `seq` of the client message that caused the error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_reply_to: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Message {
    Hello(Hello),
    StateSnapshot(StateSnapshot),
    TeleopKey(TeleopKey),
    RecordStart(RecordStart),
    RecordStop(RecordStop),
    MetricsUpdate(MetricsUpdate),
    Error(ErrorPayload),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello(_) => "hello",
            Message::StateSnapshot(_) => "state_snapshot",
            Message::TeleopKey(_) => "teleop_key",
            Message::RecordStart(_) => "record_start",
            Message::RecordStop(_) => "record_stop",
            Message::MetricsUpdate(_) => "metrics_update",
            Message::Error(_) => "error",
        }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>, in_reply_to: Option<u64>) -> Self {
        Message::Error(ErrorPayload { code, message: message.into(), in_reply_to })
    }
}

#[derive(Serialize)]
struct WireOut<'a> {
    seq: u64,
    #[serde(flatten)]
    message: &'a Message,
}

#[derive(Deserialize)]
struct WireIn {
    seq: u64,
    #[serde(flatten)]
    message: Message,
}

/// A message with its sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub seq: u64,
    pub message: Message,
}

impl Envelope {
    pub fn new(seq: u64, message: Message) -> Self {
        Self { seq, message }
    }

    /// Compact JSON, keys in declaration order, floats in shortest
    /// round-trip form.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&WireOut { seq: self.seq, message: &self.message }).expect("message serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ProtocolError> {
        let bad = |m: String| ProtocolError::Malformed(m);
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let obj = value.as_object().ok_or_else(|| bad("not an object".into()))?;
        if let Some(k) = obj.keys().find(|k| !matches!(k.as_str(), "seq" | "type" | "payload")) {
            return Err(bad(format!("unknown key {k:?}")));
        }
        let wire: WireIn = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
        Ok(Self { seq: wire.seq, message: wire.message })
    }
}

/// Hands out strictly increasing sequence numbers, starting at 1.
#[derive(Debug, Default)]
pub struct SeqCounter(u64);

impl SeqCounter {
    pub fn next(&mut self) -> u64 {
        self.0 += 1;
        self.0
    }
}

/// Accepts only strictly increasing incoming sequence numbers.
#[derive(Debug, Default)]
pub struct SeqGuard(Option<u64>);

impl SeqGuard {
    pub fn accept(&mut self, seq: u64) -> bool {
        if self.0.is_some_and(|last| seq <= last) {
            return false;
        }
        self.0 = Some(seq);
        true
    }
}
