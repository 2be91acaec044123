//! Module agent wire protocol: newline-delimited JSON frames.
//!
//! ```text
//! agent -> registry   {"t":"HELLO","descriptor":{..}}
//! registry -> agent   {"t":"WELCOME","module_id":"m3"}
//! agent -> registry   {"t":"HB","seq":1}
//! registry -> agent   {"t":"CMD","id":7,"verb":"release_brake","params":{}}
//! agent -> registry   {"t":"RES","id":7,"outcome":"SUCCEEDED","result":{}}
//! either direction    {"t":"EVT","kind":..,"payload":..}   {"t":"BYE"}   {"t":"ERR","detail":..}
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{ModuleDescriptor, ModuleId};
use crate::model::EventKind;

pub const MAX_FRAME: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t")]
pub enum Frame {
    #[serde(rename = "HELLO")]
    Hello { descriptor: ModuleDescriptor },
    #[serde(rename = "WELCOME")]
    Welcome { module_id: ModuleId },
    #[serde(rename = "HB")]
    Heartbeat { seq: u64 },
    #[serde(rename = "CMD")]
    Command { id: u64, verb: String, #[serde(default)] params: Value },
    #[serde(rename = "RES")]
    Result { id: u64, outcome: String, #[serde(default)] result: Value },
    #[serde(rename = "EVT")]
    Event {
        kind: EventKind,
        #[serde(default)]
        payload: Value,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sim_time: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source: Option<String>,
    },
    #[serde(rename = "BYE")]
    Bye,
    #[serde(rename = "ERR")]
    Error { detail: String },
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame exceeds {MAX_FRAME} bytes")]
    TooLarge,
    #[error("unknown frame type '{0}'")]
    UnknownType(String),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl FrameError {
    /// Protocol-level errors are answered with an ERR frame and the
    /// connection stays open; I/O errors end the session.
    pub fn is_recoverable(&self) -> bool {
        !matches!(self, FrameError::Io(_))
    }

    pub fn to_frame(&self) -> Frame {
        Frame::Error {
            detail: self.to_string(),
        }
    }
}

const KNOWN: [&str; 8] = ["HELLO", "WELCOME", "HB", "CMD", "RES", "EVT", "BYE", "ERR"];

impl Frame {
    pub fn decode(line: &[u8]) -> Result<Frame, FrameError> {
        if line.len() > MAX_FRAME {
            return Err(FrameError::TooLarge);
        }
        let value: Value = serde_json::from_slice(line).map_err(|e| FrameError::Malformed(e.to_string()))?;
        let t = value
            .get("t")
            .and_then(Value::as_str)
            .ok_or_else(|| FrameError::Malformed("missing \"t\"".into()))?;
        if !KNOWN.contains(&t) {
            return Err(FrameError::UnknownType(t.to_string()));
        }
        serde_json::from_value(value).map_err(|e| FrameError::Malformed(e.to_string()))
    }

    /// One line, including the trailing newline.
    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        let mut buf = serde_json::to_vec(self).map_err(|e| FrameError::Malformed(e.to_string()))?;
        if buf.len() > MAX_FRAME {
            return Err(FrameError::TooLarge);
        }
        buf.push(b'\n');
        Ok(buf)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), FrameError> {
        w.write_all(&self.encode()?)?;
        w.flush()?;
        Ok(())
    }
}

/// Reads frames from a byte stream, enforcing the size cap without
/// buffering oversized lines.
pub struct FrameReader<R> {
    inner: R,
}

impl<R: BufRead> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner }
    }

    /// `Ok(None)` at end of stream.
    pub fn next_frame(&mut self) -> Result<Option<Frame>, FrameError> {
        loop {
            let mut line = Vec::new();
            let mut oversized = false;
            loop {
                let buf = self.inner.fill_buf()?;
                if buf.is_empty() {
                    if line.is_empty() && !oversized {
                        return Ok(None);
                    }
                    break;
                }
                let (chunk, done) = match buf.iter().position(|b| *b == b'\n') {
                    Some(i) => (&buf[..i], Some(i + 1)),
                    None => (buf, None),
                };
                if !oversized {
                    if line.len() + chunk.len() > MAX_FRAME {
                        oversized = true;
                        line.clear();
                    } else {
                        line.extend_from_slice(chunk);
                    }
                }
                let consumed = done.unwrap_or(buf.len());
                self.inner.consume(consumed);
                if done.is_some() {
                    break;
                }
            }
            if oversized {
                return Err(FrameError::TooLarge);
            }
            if line.iter().all(|b| b.is_ascii_whitespace()) {
                continue;
            }
            return Frame::decode(&line).map(Some);
        }
    }
}
