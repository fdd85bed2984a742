//! Framed binary wire protocol for sensor and command streams.
//!
//! Layout, little-endian:
//!
//! ```text
//! magic 'F' 'M' 'G' | version 0x31 | type u8 | timestamp u64 | payload len u16
//! | payload | CRC32 (IEEE) over all preceding bytes
//! ```
//!
//! Payloads: SENSOR 28 x f32, POSE 10 x f32, JOINTCMD 16 or 20 x f32,
//! control frames empty, ERROR UTF-8 text. The framing is transport
//! agnostic: any ordered byte stream works.

use thiserror::Error;

use crate::signal::{JOINT_COUNT, SENSOR_COUNT};

pub const MAGIC: [u8; 3] = *b"FMG";
pub const VERSION: u8 = 0x31;
/// Bytes before the payload: magic, version, type, timestamp, length.
pub const HEADER_LEN: usize = 3 + 1 + 1 + 8 + 2;
pub const CRC_LEN: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported protocol version {0:#04x}")]
    BadVersion(u8),
    #[error("unknown frame type {0:#04x}")]
    UnknownType(u8),
    #[error("payload length {len} invalid for frame type {frame_type:#04x}")]
    BadLength { frame_type: u8, len: usize },
    #[error("CRC mismatch")]
    BadCrc,
    #[error("need {0} more bytes")]
    Incomplete(usize),
    #[error("error payload is not UTF-8")]
    BadText,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProtocolFrame {
    Sensor {
        timestamp_us: u64,
        values: [f32; SENSOR_COUNT],
    },
    Pose {
        timestamp_us: u64,
        angles_deg: [f32; JOINT_COUNT],
    },
    JointCmd {
        timestamp_us: u64,
        targets: Vec<f32>,
    },
    BaselineStart {
        timestamp_us: u64,
    },
    BaselineEnd {
        timestamp_us: u64,
    },
    Error {
        timestamp_us: u64,
        message: String,
    },
}

impl ProtocolFrame {
    pub fn frame_type(&self) -> u8 {
        match self {
            ProtocolFrame::Sensor { .. } => 0x01,
            ProtocolFrame::Pose { .. } => 0x02,
            ProtocolFrame::JointCmd { .. } => 0x03,
            ProtocolFrame::BaselineStart { .. } => 0x04,
            ProtocolFrame::BaselineEnd { .. } => 0x05,
            ProtocolFrame::Error { .. } => 0x06,
        }
    }

    pub fn timestamp_us(&self) -> u64 {
        match self {
            ProtocolFrame::Sensor { timestamp_us, .. }
            | ProtocolFrame::Pose { timestamp_us, .. }
            | ProtocolFrame::JointCmd { timestamp_us, .. }
            | ProtocolFrame::BaselineStart { timestamp_us }
            | ProtocolFrame::BaselineEnd { timestamp_us }
            | ProtocolFrame::Error { timestamp_us, .. } => *timestamp_us,
        }
    }

    fn payload(&self) -> Vec<u8> {
        match self {
            ProtocolFrame::Sensor { values, .. } => {
                values.iter().flat_map(|v| v.to_le_bytes()).collect()
            }
            ProtocolFrame::Pose { angles_deg, .. } => {
                angles_deg.iter().flat_map(|v| v.to_le_bytes()).collect()
            }
            ProtocolFrame::JointCmd { targets, .. } => {
                targets.iter().flat_map(|v| v.to_le_bytes()).collect()
            }
            ProtocolFrame::BaselineStart { .. } | ProtocolFrame::BaselineEnd { .. } => Vec::new(),
            ProtocolFrame::Error { message, .. } => message.as_bytes().to_vec(),
        }
    }
}

pub fn encode_frame(frame: &ProtocolFrame) -> Vec<u8> {
    let payload = frame.payload();
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CRC_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(frame.frame_type());
    out.extend_from_slice(&frame.timestamp_us().to_le_bytes());
    out.extend_from_slice(&(payload.len() as u16).to_le_bytes());
    out.extend_from_slice(&payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn floats(payload: &[u8]) -> Vec<f32> {
    payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

/// Parses one frame at the start of `bytes`; returns the frame and the
/// number of bytes consumed. [`ProtocolError::Incomplete`] means more input
/// is needed, not corruption.
pub fn decode_frame(bytes: &[u8]) -> Result<(ProtocolFrame, usize), ProtocolError> {
    if bytes.len() < HEADER_LEN {
        return Err(ProtocolError::Incomplete(HEADER_LEN - bytes.len()));
    }
    if bytes[..3] != MAGIC {
        return Err(ProtocolError::BadMagic);
    }
    if bytes[3] != VERSION {
        return Err(ProtocolError::BadVersion(bytes[3]));
    }
    let frame_type = bytes[4];
    let timestamp_us = u64::from_le_bytes(bytes[5..13].try_into().unwrap());
    let len = u16::from_le_bytes(bytes[13..15].try_into().unwrap()) as usize;
    let total = HEADER_LEN + len + CRC_LEN;
    if bytes.len() < total {
        return Err(ProtocolError::Incomplete(total - bytes.len()));
    }
    let stored = u32::from_le_bytes(bytes[total - CRC_LEN..total].try_into().unwrap());
    if crc32fast::hash(&bytes[..total - CRC_LEN]) != stored {
        return Err(ProtocolError::BadCrc);
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + len];
    let frame = match frame_type {
        0x01 => {
            if len != SENSOR_COUNT * 4 {
                return Err(ProtocolError::BadLength { frame_type, len });
            }
            let v = floats(payload);
            ProtocolFrame::Sensor {
                timestamp_us,
                values: v.try_into().unwrap(),
            }
        }
        0x02 => {
            if len != JOINT_COUNT * 4 {
                return Err(ProtocolError::BadLength { frame_type, len });
            }
            let v = floats(payload);
            ProtocolFrame::Pose {
                timestamp_us,
                angles_deg: v.try_into().unwrap(),
            }
        }
        0x03 => {
            if len != 16 * 4 && len != 20 * 4 {
                return Err(ProtocolError::BadLength { frame_type, len });
            }
            ProtocolFrame::JointCmd {
                timestamp_us,
                targets: floats(payload),
            }
        }
        0x04 | 0x05 => {
            if len != 0 {
                return Err(ProtocolError::BadLength { frame_type, len });
            }
            if frame_type == 0x04 {
                ProtocolFrame::BaselineStart { timestamp_us }
            } else {
                ProtocolFrame::BaselineEnd { timestamp_us }
            }
        }
        0x06 => ProtocolFrame::Error {
            timestamp_us,
            message: std::str::from_utf8(payload)
                .map_err(|_| ProtocolError::BadText)?
                .to_string(),
        },
        other => return Err(ProtocolError::UnknownType(other)),
    };
    Ok((frame, total))
}

/// Incremental decoder that resynchronizes on corruption by scanning for
/// the next magic sequence.
#[derive(Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    pos: usize,
    corrupt_skips: usize,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_bytes(&mut self, data: &[u8]) {
        self.buf.extend_from_slice(data);
    }

    /// Corrupted-region count: each resync (skipping one candidate start)
    /// increments this.
    pub fn corrupt_skips(&self) -> usize {
        self.corrupt_skips
    }

    /// Next well-formed frame, or `None` until more bytes arrive.
    pub fn next_frame(&mut self) -> Option<ProtocolFrame> {
        loop {
            // Scan to the next possible magic.
            while self.pos < self.buf.len() && self.buf[self.pos] != MAGIC[0] {
                self.pos += 1;
            }
            self.compact();
            if self.pos >= self.buf.len() {
                return None;
            }
            match decode_frame(&self.buf[self.pos..]) {
                Ok((frame, consumed)) => {
                    self.pos += consumed;
                    self.compact();
                    return Some(frame);
                }
                Err(ProtocolError::Incomplete(_)) => return None,
                Err(_) => {
                    // Corrupted candidate: skip this byte and rescan.
                    self.corrupt_skips += 1;
                    self.pos += 1;
                }
            }
        }
    }

    fn compact(&mut self) {
        if self.pos > 4096 {
            self.buf.drain(..self.pos);
            self.pos = 0;
        }
    }
}
