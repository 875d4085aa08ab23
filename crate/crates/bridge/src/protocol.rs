//! Wire messages. Every frame is one JSON object `{type, seq, payload}`.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use oikos_core::predicates::PredicateEvent;
use oikos_core::runtime::ActionCommand;

use crate::snapshot::{Delta, Snapshot};

pub const PROTOCOL: &str = "oikos/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Controller,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ClientMsg {
    Hello {
        protocol: String,
        role: Role,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client: Option<String>,
    },
    Action {
        actions: Vec<ActionCommand>,
    },
    RecordControl(RecordControl),
    ReplayControl(ReplayControl),
    Bye {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum RecordControl {
    /// Starts a fresh episode and records it.
    Start {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    Stop {},
    Mark { label: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ReplayControl {
    List {},
    /// Re-simulates a recorded log and compares every step digest.
    Verify { log: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ServerMsg {
    Attach(Attach),
    Snapshot(SnapshotMsg),
    Delta(DeltaMsg),
    PredicateEvents(PredicateEventsMsg),
    RecordControl(RecordReply),
    ReplayControl(ReplayReply),
    Error(ErrorMsg),
    Bye { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attach {
    pub protocol: String,
    pub role: Role,
    pub task: String,
    pub seed: u64,
    pub scene_digest: String,
    pub taxonomy_digest: String,
    pub step: u64,
    pub time_limit: u64,
    pub goal: Vec<String>,
    pub recording: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotReason {
    Join,
    Periodic,
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMsg {
    pub reason: SnapshotReason,
    pub digest: String,
    pub snapshot: Snapshot,
}

/// Acknowledges one action message with the step it produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub seq: u64,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaMsg {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ack: Option<Ack>,
    pub delta: Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateEventsMsg {
    pub step: u64,
    pub events: Vec<PredicateEvent>,
    pub success: bool,
    pub success_step: Option<u64>,
    pub done: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordReply {
    pub op: String,
    pub name: String,
    pub step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_step: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub name: String,
    pub bytes: u64,
    pub final_digest: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayReply {
    pub op: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub logs: Vec<LogEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ok: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    ProtocolViolation,
    VersionMismatch,
    ControllerTaken,
    Busy,
    InvalidAction,
    SessionFinished,
    NotRecording,
    AlreadyRecording,
    UnknownLog,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMsg {
    pub code: ErrorCode,
    pub message: String,
    /// Sequence number of the client message this answers, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
}

impl ServerMsg {
    pub fn error(code: ErrorCode, message: impl Into<String>, seq: Option<u64>) -> Self {
        ServerMsg::Error(ErrorMsg { code, message: message.into(), seq })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("malformed frame: {0}")]
    Json(#[from] serde_json::Error),
    #[error("frame is not an object with a numeric `seq` and a string `type`")]
    Shape,
}

/// Serializes a message with its sequence number.
pub fn encode<M: Serialize>(msg: &M, seq: u64) -> String {
    let mut v = serde_json::to_value(msg).expect("messages serialize");
    let obj = v.as_object_mut().expect("tagged enums serialize to objects");
    obj.insert("seq".into(), Value::from(seq));
    obj.entry("payload").or_insert_with(|| Value::Object(Default::default()));
    serde_json::to_string(&v).expect("messages serialize")
}

/// Parses a frame into its sequence number and message. A missing payload
/// is read as `{}`.
pub fn decode<M: DeserializeOwned>(text: &str) -> Result<(u64, M), DecodeError> {
    let mut v: Value = serde_json::from_str(text)?;
    let obj = v.as_object_mut().ok_or(DecodeError::Shape)?;
    let seq = obj.remove("seq").and_then(|s| s.as_u64()).ok_or(DecodeError::Shape)?;
    if !obj.get("type").is_some_and(Value::is_string) {
        return Err(DecodeError::Shape);
    }
    if obj.get("payload").is_none_or(Value::is_null) {
        obj.insert("payload".into(), Value::Object(Default::default()));
    }
    Ok((seq, serde_json::from_value(v)?))
}
