//! Episode log file format.
//!
//! ```text
//! u8 version
//! repeated { u32 LE length, u8 kind, body[length - 1] }
//!   kind 1: header (JSON), exactly once, first
//!   kind 2: step (bincode StepBody followed by 32-byte chain hash)
//!   kind 3: footer (JSON), exactly once, last
//! [32] sha256 of every preceding byte
//! ```
//! Each step's chain hash is `sha256(previous chain || step body)`, seeded
//! with the sha256 of the header bytes, so a changed byte anywhere is caught
//! at the first step it affects.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::ActionCommand;

pub const LOG_FORMAT_VERSION: u8 = 1;

const KIND_HEADER: u8 = 1;
const KIND_STEP: u8 = 2;
const KIND_FOOTER: u8 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub format_version: u8,
    pub seed: u64,
    pub task: String,
    /// Scene reference as written in the task, for tooling.
    pub scene_ref: String,
    pub scene_digest: String,
    pub taxonomy_digest: String,
    pub initial: Vec<String>,
    pub goal: Vec<String>,
    pub time_limit: u64,
    /// World digest after the initial conditions were applied.
    pub initial_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub actions: Vec<ActionCommand>,
    pub state_digest: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Marker {
    pub step: u64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogFooter {
    pub final_step: u64,
    pub success: bool,
    pub success_step: Option<u64>,
    pub final_digest: String,
    pub header_digest: String,
    pub final_chain: String,
    #[serde(default)]
    pub markers: Vec<Marker>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub steps: Vec<StepRecord>,
    pub footer: LogFooter,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogError {
    #[error("unsupported log format version {0}")]
    UnsupportedVersion(u8),
    #[error("corrupt log at byte {offset}: {reason}")]
    Corrupt { offset: usize, reason: String },
    #[error("log digest mismatch at step {step}")]
    DigestMismatch { step: u64 },
    #[error("i/o: {0}")]
    Io(String),
}

fn sha(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

fn header_bytes(h: &LogHeader) -> Vec<u8> {
    serde_json::to_vec(h).expect("header serializes")
}

fn step_body(s: &StepRecord) -> Vec<u8> {
    bincode::serialize(s).expect("step serializes")
}

/// Incremental hash chain used both when recording and when checking.
#[derive(Debug, Clone)]
pub(crate) struct Chain {
    pub header_digest: [u8; 32],
    pub head: [u8; 32],
}

impl Chain {
    pub fn new(header: &LogHeader) -> Self {
        let d = sha(&[&header_bytes(header)]);
        Self { header_digest: d, head: d }
    }

    pub fn push(&mut self, s: &StepRecord) -> [u8; 32] {
        self.head = sha(&[&self.head, &step_body(s)]);
        self.head
    }
}

impl EpisodeLog {
    /// Builds a log, computing the chain fields of the footer.
    pub fn new(header: LogHeader, steps: Vec<StepRecord>, success_step: Option<u64>, markers: Vec<Marker>) -> Self {
        let mut chain = Chain::new(&header);
        for s in &steps {
            chain.push(s);
        }
        let final_digest = steps.last().map(|s| hex::encode(s.state_digest)).unwrap_or_else(|| header.initial_digest.clone());
        let footer = LogFooter {
            final_step: steps.last().map_or(0, |s| s.step),
            success: success_step.is_some(),
            success_step,
            final_digest,
            header_digest: hex::encode(chain.header_digest),
            final_chain: hex::encode(chain.head),
            markers,
        };
        Self { header, steps, footer }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![LOG_FORMAT_VERSION];
        let mut record = |kind: u8, body: &[u8]| {
            out.extend_from_slice(&((body.len() + 1) as u32).to_le_bytes());
            out.push(kind);
            out.extend_from_slice(body);
        };
        record(KIND_HEADER, &header_bytes(&self.header));
        let mut chain = Chain::new(&self.header);
        for s in &self.steps {
            let mut body = step_body(s);
            body.extend_from_slice(&chain.push(s));
            record(KIND_STEP, &body);
        }
        record(KIND_FOOTER, &serde_json::to_vec(&self.footer).expect("footer serializes"));
        let sum = sha(&[&out]);
        out.extend_from_slice(&sum);
        out
    }

    /// Parses and verifies a log. Chain breaks are reported as
    /// `DigestMismatch` at the first affected step; anything else that
    /// fails to frame or checksum is `Corrupt`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LogError> {
        let corrupt = |offset: usize, reason: &str| LogError::Corrupt { offset, reason: reason.to_string() };
        let Some(&version) = bytes.first() else { return Err(corrupt(0, "empty file")) };
        if version != LOG_FORMAT_VERSION {
            return Err(LogError::UnsupportedVersion(version));
        }
        if bytes.len() < 1 + 32 {
            return Err(corrupt(bytes.len(), "truncated"));
        }
        let end = bytes.len() - 32;
        let mut records: Vec<(usize, u8, &[u8])> = Vec::new();
        let mut at = 1;
        while at < end {
            if at + 5 > end {
                return Err(corrupt(at, "truncated record frame"));
            }
            let len = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
            if len == 0 || at + 4 + len > end {
                return Err(corrupt(at, "record length out of range"));
            }
            records.push((at, bytes[at + 4], &bytes[at + 5..at + 4 + len]));
            at += 4 + len;
        }
        let (header_rec, rest) = records.split_first().ok_or_else(|| corrupt(1, "no records"))?;
        let (footer_rec, step_recs) = rest.split_last().ok_or_else(|| corrupt(end, "no footer"))?;
        if header_rec.1 != KIND_HEADER {
            return Err(corrupt(header_rec.0, "first record is not a header"));
        }
        if footer_rec.1 != KIND_FOOTER {
            return Err(corrupt(footer_rec.0, "last record is not a footer"));
        }
        let header: LogHeader =
            serde_json::from_slice(header_rec.2).map_err(|e| corrupt(header_rec.0, &format!("header: {e}")))?;
        let footer: LogFooter =
            serde_json::from_slice(footer_rec.2).map_err(|e| corrupt(footer_rec.0, &format!("footer: {e}")))?;

        let mut head = sha(&[header_rec.2]);
        if hex::encode(head) != footer.header_digest {
            return Err(LogError::DigestMismatch { step: 0 });
        }
        let mut steps = Vec::with_capacity(step_recs.len());
        for (i, (off, kind, body)) in step_recs.iter().enumerate() {
            let step = i as u64 + 1;
            if *kind != KIND_STEP {
                return Err(corrupt(*off, "unexpected record kind"));
            }
            if body.len() < 32 {
                return Err(corrupt(*off, "step record too short"));
            }
            let (payload, stored) = body.split_at(body.len() - 32);
            head = sha(&[&head, payload]);
            if head[..] != stored[..] {
                return Err(LogError::DigestMismatch { step });
            }
            let rec: StepRecord = bincode::deserialize(payload).map_err(|e| corrupt(*off, &format!("step: {e}")))?;
            if rec.step != step || bincode::serialized_size(&rec).ok() != Some(payload.len() as u64) {
                return Err(LogError::DigestMismatch { step });
            }
            steps.push(rec);
        }
        let last = steps.len() as u64;
        if hex::encode(head) != footer.final_chain || footer.final_step != last {
            return Err(LogError::DigestMismatch { step: last });
        }
        if steps.last().is_some_and(|s| hex::encode(s.state_digest) != footer.final_digest) {
            return Err(LogError::DigestMismatch { step: last });
        }
        if sha(&[&bytes[..end]])[..] != bytes[end..] {
            return Err(corrupt(end, "file checksum mismatch"));
        }
        Ok(Self { header, steps, footer })
    }

    pub fn write(&self, path: &std::path::Path) -> Result<(), LogError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| LogError::Io(e.to_string()))
    }

    pub fn read(path: &std::path::Path) -> Result<Self, LogError> {
        let bytes = std::fs::read(path).map_err(|e| LogError::Io(e.to_string()))?;
        Self::from_bytes(&bytes)
    }

    pub fn final_digest(&self) -> &str {
        &self.footer.final_digest
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn sample_log(n: u64) -> EpisodeLog {
        let header = LogHeader {
            format_version: LOG_FORMAT_VERSION,
            seed: 3,
            task: "t".into(),
            scene_ref: "s.json".into(),
            scene_digest: "00".into(),
            taxonomy_digest: "11".into(),
            initial: vec!["Cooked(meat_1)=false".into()],
            goal: vec!["Cooked(meat_1)=true".into()],
            time_limit: 600,
            initial_digest: "22".into(),
        };
        let steps = (1..=n)
            .map(|i| StepRecord {
                step: i,
                actions: vec![ActionCommand::move_hand(0, Vec3::new(i as f64 * 0.1, 0.0, -0.1))],
                state_digest: [i as u8; 32],
            })
            .collect();
        EpisodeLog::new(header, steps, Some(n), vec![Marker { step: 2, label: "here".into() }])
    }

    #[test]
    fn round_trip() {
        let log = sample_log(5);
        let bytes = log.to_bytes();
        assert_eq!(bytes[0], LOG_FORMAT_VERSION);
        assert_eq!(EpisodeLog::from_bytes(&bytes).unwrap(), log);
    }

    #[test]
    fn every_byte_flip_detected() {
        let bytes = sample_log(3).to_bytes();
        for i in 0..bytes.len() {
            let mut m = bytes.clone();
            m[i] ^= 0x01;
            assert!(EpisodeLog::from_bytes(&m).is_err(), "byte {i} undetected");
        }
    }

    #[test]
    fn tampered_action_pinpoints_step() {
        let log = sample_log(4);
        let bytes = log.to_bytes();
        // Locate step 3's record and flip a byte inside its action payload.
        let mut at = 1;
        let mut starts = Vec::new();
        while at < bytes.len() - 32 {
            let len = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
            starts.push(at);
            at += 4 + len;
        }
        let mut m = bytes.clone();
        m[starts[3] + 5 + 30] ^= 0x40;
        assert_eq!(EpisodeLog::from_bytes(&m), Err(LogError::DigestMismatch { step: 3 }));
    }

    #[test]
    fn version_and_truncation() {
        let mut bytes = sample_log(1).to_bytes();
        bytes[0] = 9;
        assert_eq!(EpisodeLog::from_bytes(&bytes), Err(LogError::UnsupportedVersion(9)));
        let bytes = sample_log(2).to_bytes();
        assert!(matches!(EpisodeLog::from_bytes(&bytes[..bytes.len() - 1]), Err(_)));
        assert!(EpisodeLog::from_bytes(&[]).is_err());
    }
}
