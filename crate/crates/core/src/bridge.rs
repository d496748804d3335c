//! Wire format of the live bridge.
//!
//! Every frame is one JSON object on its own line:
//! `{"seq": 7, "kind": "steer", "data": {...}}`. Unit kinds such as `pause`
//! carry no `data`. Each side numbers its own frames with a strictly
//! increasing `seq`; the server acks every client frame with that number.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Point;
use crate::graph::NodeId;
use crate::sim::{HapEvent, HirEvent, Mode, Snapshot, Steer};

/// Every kind the bridge understands, in either direction.
pub const KINDS: [&str; 10] = [
    "state",
    "steer",
    "spawn_deviation",
    "pause",
    "resume",
    "set_mode",
    "hir_report",
    "hap_outcome",
    "ack",
    "error",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub seq: u64,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "data")]
pub enum Body {
    /// Server: world snapshot.
    State(Snapshot),
    /// Client: steer an external worker.
    Steer(SteerCommand),
    /// Client: send a scripted worker off toward a node.
    SpawnDeviation(SpawnDeviation),
    /// Client: freeze simulated time.
    Pause,
    /// Client: unfreeze simulated time.
    Resume,
    /// Client: switch the reaction mode.
    SetMode(SetMode),
    /// Server: a fresh intention report.
    HirReport(HirEvent),
    /// Server: what the human-aware planner decided.
    HapOutcome(HapEvent),
    /// Server: the client frame `of` was applied.
    Ack(Ack),
    /// Server: the client frame `of` was rejected.
    Error(ErrorReply),
}

impl Body {
    pub fn kind(&self) -> &'static str {
        match self {
            Body::State(_) => "state",
            Body::Steer(_) => "steer",
            Body::SpawnDeviation(_) => "spawn_deviation",
            Body::Pause => "pause",
            Body::Resume => "resume",
            Body::SetMode(_) => "set_mode",
            Body::HirReport(_) => "hir_report",
            Body::HapOutcome(_) => "hap_outcome",
            Body::Ack(_) => "ack",
            Body::Error(_) => "error",
        }
    }

    /// Whether clients may send this kind.
    pub fn from_client(&self) -> bool {
        matches!(
            self,
            Body::Steer(_) | Body::SpawnDeviation(_) | Body::Pause | Body::Resume | Body::SetMode(_)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteerCommand {
    pub worker: u32,
    #[serde(flatten)]
    pub steer: Steer,
}

impl SteerCommand {
    /// A command that makes the worker stand still.
    pub fn stop(worker: u32) -> Self {
        Self { worker, steer: Steer { direction: Some(Point::new(0.0, 0.0)), target: None, speed: Some(0.0) } }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpawnDeviation {
    pub worker: u32,
    pub toward: NodeId,
    /// Simulated start time; `None` means as soon as possible.
    #[serde(default)]
    pub at: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetMode {
    pub mode: Mode,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub of: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReply {
    /// Sequence number of the offending frame, when it could be read.
    pub of: Option<u64>,
    pub message: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unknown kind {kind:?}")]
    UnknownKind { seq: u64, kind: String },
    #[error("invalid {kind} frame: {reason}")]
    InvalidPayload { seq: u64, kind: String, reason: String },
    #[error("seq {seq} does not follow {last}")]
    OutOfOrder { seq: u64, last: u64 },
}

impl ProtocolError {
    /// The offending frame's `seq`, when known.
    pub fn seq(&self) -> Option<u64> {
        match self {
            ProtocolError::Malformed(_) => None,
            ProtocolError::UnknownKind { seq, .. }
            | ProtocolError::InvalidPayload { seq, .. }
            | ProtocolError::OutOfOrder { seq, .. } => Some(*seq),
        }
    }
}

/// Parses one line. Unknown kinds and bad payloads are told apart from
/// input that is not a frame at all.
pub fn decode(line: &str) -> Result<Frame, ProtocolError> {
    let value: serde_json::Value =
        serde_json::from_str(line.trim()).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| ProtocolError::Malformed("expected a JSON object".into()))?;
    let seq = obj
        .get("seq")
        .and_then(|s| s.as_u64())
        .ok_or_else(|| ProtocolError::Malformed("missing or invalid seq".into()))?;
    let kind = obj
        .get("kind")
        .and_then(|k| k.as_str())
        .ok_or_else(|| ProtocolError::Malformed("missing or invalid kind".into()))?
        .to_string();
    if !KINDS.contains(&kind.as_str()) {
        return Err(ProtocolError::UnknownKind { seq, kind });
    }
    serde_json::from_value(value).map_err(|e| ProtocolError::InvalidPayload { seq, kind, reason: e.to_string() })
}

/// One line of JSON, without the trailing newline.
pub fn encode(frame: &Frame) -> String {
    serde_json::to_string(frame).expect("frames serialize")
}

/// Numbers outgoing frames.
#[derive(Clone, Debug, Default)]
pub struct Sequencer {
    next: u64,
}

impl Sequencer {
    pub fn new() -> Self {
        Self { next: 1 }
    }

    pub fn stamp(&mut self, body: Body) -> Frame {
        let seq = self.next.max(1);
        self.next = seq + 1;
        Frame { seq, body }
    }
}

/// Enforces strictly increasing `seq` on incoming frames.
#[derive(Clone, Debug, Default)]
pub struct SeqGuard {
    last: Option<u64>,
}

impl SeqGuard {
    pub fn check(&mut self, seq: u64) -> Result<(), ProtocolError> {
        match self.last {
            Some(last) if seq <= last => Err(ProtocolError::OutOfOrder { seq, last }),
            _ => {
                self.last = Some(seq);
                Ok(())
            }
        }
    }

    pub fn last(&self) -> Option<u64> {
        self.last
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_kinds_have_no_data() {
        let f = Frame { seq: 3, body: Body::Pause };
        assert_eq!(encode(&f), r#"{"seq":3,"kind":"pause"}"#);
        assert_eq!(decode(r#"{"seq":3,"kind":"pause"}"#).unwrap(), f);
    }

    #[test]
    fn errors_are_classified() {
        assert!(matches!(decode("{nope"), Err(ProtocolError::Malformed(_))));
        assert!(matches!(decode("[1,2]"), Err(ProtocolError::Malformed(_))));
        assert!(matches!(decode(r#"{"kind":"pause"}"#), Err(ProtocolError::Malformed(_))));
        assert_eq!(
            decode(r#"{"seq":4,"kind":"teleport"}"#),
            Err(ProtocolError::UnknownKind { seq: 4, kind: "teleport".into() })
        );
        let e = decode(r#"{"seq":5,"kind":"steer","data":{"direction":{"x":1,"y":0}}}"#).unwrap_err();
        assert!(matches!(e, ProtocolError::InvalidPayload { seq: 5, .. }), "{e:?}");
    }

    #[test]
    fn seq_guard_rejects_repeats() {
        let mut g = SeqGuard::default();
        g.check(1).unwrap();
        g.check(5).unwrap();
        assert_eq!(g.check(5), Err(ProtocolError::OutOfOrder { seq: 5, last: 5 }));
        assert!(g.check(2).is_err());
        g.check(6).unwrap();
    }
}
