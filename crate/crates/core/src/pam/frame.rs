use super::message::{decode, encode, CharacteristicMessage};
use super::PamError;

/// Bytes around the payload: char_id, seq, length, crc.
pub const FRAME_OVERHEAD: usize = 1 + 4 + 2 + 4;

/// One link-layer frame: `char_id u8 | seq u32 | len u16 | payload | crc32 u32`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkFrame {
    pub char_id: u8,
    pub seq: u32,
    pub payload: Vec<u8>,
}

impl LinkFrame {
    pub fn for_message(seq: u32, msg: &CharacteristicMessage) -> Result<Self, PamError> {
        Ok(Self { char_id: msg.char_id() as u8, seq, payload: encode(msg)? })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FRAME_OVERHEAD + self.payload.len());
        out.push(self.char_id);
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.payload);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PamError> {
        if bytes.len() < FRAME_OVERHEAD {
            return Err(PamError::Truncated(bytes.len()));
        }
        let len = u16::from_le_bytes([bytes[5], bytes[6]]) as usize;
        if bytes.len() != FRAME_OVERHEAD + len {
            return Err(PamError::FrameLength { declared: len, actual: bytes.len().saturating_sub(FRAME_OVERHEAD) });
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(PamError::Crc { stored, actual });
        }
        Ok(Self {
            char_id: bytes[0],
            seq: u32::from_le_bytes(bytes[1..5].try_into().unwrap()),
            payload: body[7..].to_vec(),
        })
    }

    pub fn message(&self) -> Result<CharacteristicMessage, PamError> {
        decode(self.char_id, &self.payload)
    }
}
