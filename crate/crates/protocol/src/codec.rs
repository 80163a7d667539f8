//! Wire framing: a 4-byte big-endian length prefix followed by a JSON
//! payload whose first field is the schema version.
//!
//! JSON was chosen over a compact binary encoding for debuggability;
//! experiment traffic is tiny. The full layout is documented in
//! `docs/protocol.md`.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::Message;

/// Current payload schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Frames larger than this are rejected outright.
pub const MAX_FRAME_BYTES: u32 = 1024 * 1024;

#[derive(Debug, Error)]
pub enum MalformedMessage {
    #[error("truncated frame: {0}")]
    Truncated(String),
    #[error("oversized frame: {size} bytes (max {MAX_FRAME_BYTES})")]
    Oversized { size: u32 },
    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),
    #[error("invalid payload: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error(transparent)]
    Malformed(#[from] MalformedMessage),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("connection closed by peer")]
    ConnectionClosed,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    v: u32,
    body: Message,
}

/// Encodes a message into a complete frame (length prefix included).
pub fn encode_message(msg: &Message) -> Vec<u8> {
    let payload = serde_json::to_vec(&Envelope {
        v: SCHEMA_VERSION,
        body: msg.clone(),
    })
    .expect("message serialization cannot fail");
    debug_assert!(payload.len() <= MAX_FRAME_BYTES as usize);
    let mut frame = Vec::with_capacity(4 + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.extend_from_slice(&payload);
    frame
}

/// Decodes one complete frame (length prefix included).
pub fn decode_message(bytes: &[u8]) -> Result<Message, MalformedMessage> {
    if bytes.len() < 4 {
        return Err(MalformedMessage::Truncated(format!(
            "frame shorter than length prefix: {} bytes",
            bytes.len()
        )));
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if len > MAX_FRAME_BYTES {
        return Err(MalformedMessage::Oversized { size: len });
    }
    let payload = &bytes[4..];
    if payload.len() != len as usize {
        return Err(MalformedMessage::Truncated(format!(
            "length prefix says {len} bytes, frame carries {}",
            payload.len()
        )));
    }
    decode_payload(payload)
}

fn decode_payload(payload: &[u8]) -> Result<Message, MalformedMessage> {
    let env: Envelope = serde_json::from_slice(payload)
        .map_err(|e| MalformedMessage::Invalid(e.to_string()))?;
    if env.v != SCHEMA_VERSION {
        return Err(MalformedMessage::SchemaVersion(env.v));
    }
    env.body.validate().map_err(MalformedMessage::Invalid)?;
    Ok(env.body)
}

/// Writes one framed message to a blocking stream.
pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<(), CodecError> {
    let frame = encode_message(msg);
    w.write_all(&frame)?;
    w.flush()?;
    Ok(())
}

/// Reads one framed message from a blocking stream.
///
/// Returns `ConnectionClosed` if the stream ends cleanly on a frame
/// boundary; a stream ending mid-frame is reported as truncated.
pub fn read_message<R: Read>(r: &mut R) -> Result<Message, CodecError> {
    let mut len_buf = [0u8; 4];
    match r.read_exact(&mut len_buf) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
            return Err(CodecError::ConnectionClosed);
        }
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len_buf);
    if len > MAX_FRAME_BYTES {
        return Err(MalformedMessage::Oversized { size: len }.into());
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            CodecError::Malformed(MalformedMessage::Truncated(
                "stream ended mid-frame".into(),
            ))
        } else {
            CodecError::Io(e)
        }
    })?;
    Ok(decode_payload(&payload)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::*;

    #[test]
    fn heartbeat_with_no_reports_round_trips() {
        let msg = Message::Heartbeat(HeartbeatMessage {
            worker_id: "w1".into(),
            sequence_no: 1,
            task_reports: vec![],
            free_slots: 2,
            timestamp_ms: 42,
        });
        let decoded = decode_message(&encode_message(&msg)).unwrap();
        assert_eq!(decoded, msg);
    }

    #[test]
    fn suspend_command_round_trips() {
        let msg = Message::Commands(CommandMessage {
            directives: vec![Directive {
                task_id: "t1".into(),
                action: CommandAction::Suspend,
                payload: None,
            }],
        });
        let decoded = decode_message(&encode_message(&msg)).unwrap();
        assert_eq!(decoded, msg);
    }

    #[test]
    fn truncated_frame_is_malformed() {
        let err = decode_message(&[0, 0, 9]).unwrap_err();
        assert!(matches!(err, MalformedMessage::Truncated(_)));
    }

    #[test]
    fn oversized_frame_is_rejected() {
        let mut frame = ((MAX_FRAME_BYTES + 1).to_be_bytes()).to_vec();
        frame.extend_from_slice(&[0; 16]);
        let err = decode_message(&frame).unwrap_err();
        assert!(matches!(err, MalformedMessage::Oversized { .. }));
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let payload = br#"{"v":9,"body":{"kind":"ack"}}"#;
        let mut frame = (payload.len() as u32).to_be_bytes().to_vec();
        frame.extend_from_slice(payload);
        let err = decode_message(&frame).unwrap_err();
        assert!(matches!(err, MalformedMessage::SchemaVersion(9)));
    }

    #[test]
    fn duplicate_directives_are_rejected_on_decode() {
        let msg = Message::Commands(CommandMessage {
            directives: vec![
                Directive {
                    task_id: "t1".into(),
                    action: CommandAction::Suspend,
                    payload: None,
                },
                Directive {
                    task_id: "t1".into(),
                    action: CommandAction::Kill,
                    payload: None,
                },
            ],
        });
        // Bypass encode-side validation by building the frame manually.
        let err = decode_message(&encode_message(&msg)).unwrap_err();
        assert!(matches!(err, MalformedMessage::Invalid(_)));
    }

    #[test]
    fn out_of_range_progress_is_rejected() {
        let msg = Message::Heartbeat(HeartbeatMessage {
            worker_id: "w1".into(),
            sequence_no: 1,
            task_reports: vec![TaskReport {
                task_id: "t1".into(),
                observed_state: ObservedState::Running,
                progress_fraction: 1.5,
                resident_bytes: 0,
                swapped_bytes: 0,
            }],
            free_slots: 0,
            timestamp_ms: 0,
        });
        let err = decode_message(&encode_message(&msg)).unwrap_err();
        assert!(matches!(err, MalformedMessage::Invalid(_)));
    }

    #[test]
    fn version_field_leads_the_payload() {
        let frame = encode_message(&Message::Ack);
        let payload = std::str::from_utf8(&frame[4..]).unwrap();
        assert!(payload.starts_with(r#"{"v":1,"#), "payload: {payload}");
    }
}
