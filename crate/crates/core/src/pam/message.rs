use serde::{Deserialize, Serialize};

use super::PamError;
use crate::SnoreClass;

/// Characteristic identifiers as carried in a link frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum CharId {
    ActivityInstantaneous = 0x01,
    ActivitySummary = 0x02,
    EnvTemperature = 0x03,
    EnvHumidity = 0x04,
    EnvPressure = 0x05,
    Alerting = 0x06,
}

impl CharId {
    pub const ALL: [CharId; 6] = [
        CharId::ActivityInstantaneous,
        CharId::ActivitySummary,
        CharId::EnvTemperature,
        CharId::EnvHumidity,
        CharId::EnvPressure,
        CharId::Alerting,
    ];

    pub fn from_byte(b: u8) -> Result<Self, PamError> {
        CharId::ALL.into_iter().find(|c| *c as u8 == b).ok_or(PamError::UnknownChar(b))
    }

    /// Fixed payload length for this characteristic.
    pub fn payload_len(self) -> usize {
        match self {
            CharId::ActivityInstantaneous => 12,
            CharId::ActivitySummary => 21,
            CharId::EnvTemperature | CharId::EnvHumidity => 13,
            CharId::EnvPressure => 15,
            CharId::Alerting => 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Temperature,
    Humidity,
    Pressure,
}

impl EnvKind {
    fn code(self) -> u8 {
        match self {
            EnvKind::Temperature => 0,
            EnvKind::Humidity => 1,
            EnvKind::Pressure => 2,
        }
    }

    /// Bluetooth SIG unit UUID (`org.bluetooth.unit.*`).
    pub fn gatt_unit(self) -> u16 {
        match self {
            EnvKind::Temperature => 0x272F,
            EnvKind::Humidity => 0x27AD,
            EnvKind::Pressure => 0x2724,
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            EnvKind::Temperature => "celsius",
            EnvKind::Humidity => "percent",
            EnvKind::Pressure => "pascal",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::Temperature => "temperature",
            EnvKind::Humidity => "humidity",
            EnvKind::Pressure => "pressure",
        }
    }

    fn char_id(self) -> CharId {
        match self {
            EnvKind::Temperature => CharId::EnvTemperature,
            EnvKind::Humidity => CharId::EnvHumidity,
            EnvKind::Pressure => CharId::EnvPressure,
        }
    }
}

/// Fixed-point environmental reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvValue {
    /// Hundredths of a degree Celsius.
    Temperature(i16),
    /// Hundredths of a percent, at most 10000.
    Humidity(u16),
    /// Tenths of a pascal.
    Pressure(u32),
}

impl EnvValue {
    pub fn temperature_c(c: f64) -> Self {
        EnvValue::Temperature((c * 100.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16)
    }

    pub fn humidity_pct(pct: f64) -> Self {
        EnvValue::Humidity((pct * 100.0).round().clamp(0.0, 10_000.0) as u16)
    }

    pub fn pressure_pa(pa: f64) -> Self {
        EnvValue::Pressure((pa * 10.0).round().clamp(0.0, u32::MAX as f64) as u32)
    }

    pub fn kind(self) -> EnvKind {
        match self {
            EnvValue::Temperature(_) => EnvKind::Temperature,
            EnvValue::Humidity(_) => EnvKind::Humidity,
            EnvValue::Pressure(_) => EnvKind::Pressure,
        }
    }

    /// Value in the kind's SI-ish unit (°C, %, Pa).
    pub fn as_f64(self) -> f64 {
        match self {
            EnvValue::Temperature(v) => v as f64 / 100.0,
            EnvValue::Humidity(v) => v as f64 / 100.0,
            EnvValue::Pressure(v) => v as f64 / 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CharacteristicMessage {
    ActivityInstantaneous { timestamp_ms: u64, p_snore_bp: u16, p_non_snore_bp: u16 },
    ActivitySummary { window_start_ms: u64, window_end_ms: u64, inferred_class: SnoreClass, episode_count: u32 },
    Environment { timestamp_ms: u64, value: EnvValue },
    Alerting { timestamp_ms: u64, active: bool, intensity_byte: u8 },
}

pub const BASIS_POINTS: u16 = 10_000;

impl CharacteristicMessage {
    /// Rounds the snore probability to basis points; the complement takes the rest.
    pub fn instantaneous(timestamp_ms: u64, p_snore: f64) -> Self {
        let p_snore_bp = (p_snore.clamp(0.0, 1.0) * BASIS_POINTS as f64).round() as u16;
        CharacteristicMessage::ActivityInstantaneous {
            timestamp_ms,
            p_snore_bp,
            p_non_snore_bp: BASIS_POINTS - p_snore_bp,
        }
    }

    /// `intensity` in `[0, 1]` maps to `round(intensity · 255)`.
    pub fn alerting(timestamp_ms: u64, active: bool, intensity: f64) -> Self {
        let intensity_byte = if active { (intensity.clamp(0.0, 1.0) * 255.0).round() as u8 } else { 0 };
        CharacteristicMessage::Alerting { timestamp_ms, active, intensity_byte }
    }

    pub fn char_id(&self) -> CharId {
        match self {
            CharacteristicMessage::ActivityInstantaneous { .. } => CharId::ActivityInstantaneous,
            CharacteristicMessage::ActivitySummary { .. } => CharId::ActivitySummary,
            CharacteristicMessage::Environment { value, .. } => value.kind().char_id(),
            CharacteristicMessage::Alerting { .. } => CharId::Alerting,
        }
    }

    /// Device time the message refers to; summaries report their window start.
    pub fn timestamp_ms(&self) -> u64 {
        match *self {
            CharacteristicMessage::ActivityInstantaneous { timestamp_ms, .. }
            | CharacteristicMessage::Environment { timestamp_ms, .. }
            | CharacteristicMessage::Alerting { timestamp_ms, .. } => timestamp_ms,
            CharacteristicMessage::ActivitySummary { window_start_ms, .. } => window_start_ms,
        }
    }

    pub fn validate(&self) -> Result<(), PamError> {
        match *self {
            CharacteristicMessage::ActivityInstantaneous { p_snore_bp, p_non_snore_bp, .. } => {
                if p_snore_bp as u32 + p_non_snore_bp as u32 != BASIS_POINTS as u32 {
                    return Err(PamError::Protocol(format!(
                        "probabilities {p_snore_bp} + {p_non_snore_bp} basis points do not sum to 10000"
                    )));
                }
            }
            CharacteristicMessage::ActivitySummary { window_start_ms, window_end_ms, .. } => {
                if window_end_ms <= window_start_ms {
                    return Err(PamError::Protocol(format!(
                        "summary window end {window_end_ms} is not after start {window_start_ms}"
                    )));
                }
            }
            CharacteristicMessage::Environment { value: EnvValue::Humidity(h), .. } if h > 10_000 => {
                return Err(PamError::Protocol(format!("humidity {h} above 100.00%")));
            }
            CharacteristicMessage::Alerting { active: false, intensity_byte, .. } if intensity_byte != 0 => {
                return Err(PamError::Protocol(format!("inactive alert with intensity {intensity_byte}")));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Payload bytes for `msg`; the characteristic is `msg.char_id()`.
pub fn encode(msg: &CharacteristicMessage) -> Result<Vec<u8>, PamError> {
    msg.validate()?;
    let mut out = Vec::with_capacity(msg.char_id().payload_len());
    match *msg {
        CharacteristicMessage::ActivityInstantaneous { timestamp_ms, p_snore_bp, p_non_snore_bp } => {
            out.extend_from_slice(&timestamp_ms.to_le_bytes());
            out.extend_from_slice(&p_snore_bp.to_le_bytes());
            out.extend_from_slice(&p_non_snore_bp.to_le_bytes());
        }
        CharacteristicMessage::ActivitySummary { window_start_ms, window_end_ms, inferred_class, episode_count } => {
            out.extend_from_slice(&window_start_ms.to_le_bytes());
            out.extend_from_slice(&window_end_ms.to_le_bytes());
            out.push(inferred_class.code());
            out.extend_from_slice(&episode_count.to_le_bytes());
        }
        CharacteristicMessage::Environment { timestamp_ms, value } => {
            out.extend_from_slice(&timestamp_ms.to_le_bytes());
            out.push(value.kind().code());
            out.extend_from_slice(&value.kind().gatt_unit().to_le_bytes());
            match value {
                EnvValue::Temperature(v) => out.extend_from_slice(&v.to_le_bytes()),
                EnvValue::Humidity(v) => out.extend_from_slice(&v.to_le_bytes()),
                EnvValue::Pressure(v) => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
        CharacteristicMessage::Alerting { timestamp_ms, active, intensity_byte } => {
            out.extend_from_slice(&timestamp_ms.to_le_bytes());
            out.push(u8::from(active));
            out.push(intensity_byte);
        }
    }
    debug_assert_eq!(out.len(), msg.char_id().payload_len());
    Ok(out)
}

fn u64_at(p: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(p[at..at + 8].try_into().unwrap())
}

fn u32_at(p: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(p[at..at + 4].try_into().unwrap())
}

fn u16_at(p: &[u8], at: usize) -> u16 {
    u16::from_le_bytes(p[at..at + 2].try_into().unwrap())
}

pub fn decode(char_id: u8, payload: &[u8]) -> Result<CharacteristicMessage, PamError> {
    let id = CharId::from_byte(char_id)?;
    let expected = id.payload_len();
    if payload.len() != expected {
        return Err(PamError::Length { char_id, expected, actual: payload.len() });
    }
    let p = payload;
    let msg = match id {
        CharId::ActivityInstantaneous => CharacteristicMessage::ActivityInstantaneous {
            timestamp_ms: u64_at(p, 0),
            p_snore_bp: u16_at(p, 8),
            p_non_snore_bp: u16_at(p, 10),
        },
        CharId::ActivitySummary => CharacteristicMessage::ActivitySummary {
            window_start_ms: u64_at(p, 0),
            window_end_ms: u64_at(p, 8),
            inferred_class: SnoreClass::from_code(p[16])
                .ok_or_else(|| PamError::Protocol(format!("unknown class code {}", p[16])))?,
            episode_count: u32_at(p, 17),
        },
        CharId::EnvTemperature | CharId::EnvHumidity | CharId::EnvPressure => {
            let value = match id {
                CharId::EnvTemperature => EnvValue::Temperature(u16_at(p, 11) as i16),
                CharId::EnvHumidity => EnvValue::Humidity(u16_at(p, 11)),
                _ => EnvValue::Pressure(u32_at(p, 11)),
            };
            let kind = value.kind();
            if p[8] != kind.code() {
                return Err(PamError::Protocol(format!("kind byte {} on {} characteristic", p[8], kind.as_str())));
            }
            let unit = u16_at(p, 9);
            if unit != kind.gatt_unit() {
                return Err(PamError::Protocol(format!("unit {unit:#06x} on {} characteristic", kind.as_str())));
            }
            CharacteristicMessage::Environment { timestamp_ms: u64_at(p, 0), value }
        }
        CharId::Alerting => CharacteristicMessage::Alerting {
            timestamp_ms: u64_at(p, 0),
            active: match p[8] {
                0 => false,
                1 => true,
                b => return Err(PamError::Protocol(format!("alert flag byte {b}"))),
            },
            intensity_byte: p[9],
        },
    };
    msg.validate()?;
    Ok(msg)
}
