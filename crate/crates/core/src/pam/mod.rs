//! Characteristic payload codec and the simulated peripheral→central link.

mod frame;
mod link;
mod message;

use thiserror::Error;

pub use frame::{LinkFrame, FRAME_OVERHEAD};
pub use link::{
    link, Central, CentralStats, Delivery, FaultConfig, Peripheral, PeripheralStats, Received, MAX_INDICATION_ATTEMPTS,
};
pub use message::{decode, encode, CharId, CharacteristicMessage, EnvKind, EnvValue, BASIS_POINTS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PamError {
    #[error("characteristic {char_id:#04x} expects {expected} payload bytes, got {actual}")]
    Length { char_id: u8, expected: usize, actual: usize },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("unknown characteristic id {0:#04x}")]
    UnknownChar(u8),
    #[error("frame checksum mismatch (stored {stored:#010x}, computed {actual:#010x})")]
    Crc { stored: u32, actual: u32 },
    #[error("frame of {0} bytes is shorter than the frame header")]
    Truncated(usize),
    #[error("frame declares {declared} payload bytes but carries {actual}")]
    FrameLength { declared: usize, actual: usize },
    #[error("indication {seq} unconfirmed after {attempts} attempts")]
    Undelivered { seq: u32, attempts: u32 },
    #[error("link closed")]
    Closed,
    #[error("invalid link configuration: {0}")]
    Config(String),
}
