//! Length-prefixed binary wire protocol.
//!
//! Every message is an 8-byte header followed by its payload:
//!
//! ```text
//! offset  size  field
//! 0       2     magic "NT" (0x4E 0x54)
//! 2       1     version (1)
//! 3       1     message type
//! 4       4     payload length, u32 little-endian (max 16 MiB)
//! ```
//!
//! Payload fields are little-endian; floats are IEEE-754 f64 and must be
//! finite; strings and byte blobs carry a u32 length prefix. The full
//! per-message layout lives in `docs/protocol.md`. The WebSocket bridge sends
//! the same bytes, one message per binary frame.

mod codec;
mod messages;
mod wire;

pub use codec::{decode, encode, encode_into, DecodeError, DecodeErrorKind, Decoded, EncodeError, FrameDecoder};
pub use messages::*;

pub const MAGIC: [u8; 2] = [0x4E, 0x54];
pub const PROTOCOL_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 8;
pub const MAX_PAYLOAD_LEN: usize = 16 * 1024 * 1024;

/// Message type byte.
pub mod msg_type {
    pub const HELLO: u8 = 0x01;
    pub const SUBSCRIBE: u8 = 0x02;
    pub const RIGID_BODY_FRAME: u8 = 0x03;
    pub const VIDEO_FRAME: u8 = 0x04;
    pub const PLAN_UPDATE: u8 = 0x05;
    pub const GUIDANCE: u8 = 0x06;
    pub const CALIBRATION_RESULT: u8 = 0x07;
    pub const SIM_COMMAND: u8 = 0x08;
    pub const ERROR: u8 = 0x09;
    pub const HEARTBEAT: u8 = 0x0A;
    pub const US_ANNOTATION: u8 = 0x0B;
    pub const CONTROL: u8 = 0x0C;
}

/// Codes carried by [`ErrorMessage`].
pub mod error_code {
    pub const MALFORMED_MESSAGE: u16 = 1;
    pub const INVALID_PLAN: u16 = 2;
    pub const CALIBRATION_FAILED: u16 = 3;
    pub const COMMAND_REJECTED: u16 = 4;
    pub const UNSUPPORTED: u16 = 5;
    pub const INTERNAL: u16 = 6;
}
