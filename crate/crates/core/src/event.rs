//! Gateway event JSON schema.
//!
//! ```json
//! {"device_id":"kw-01","seq":0,"type":"alerting","timestamp_ms":1700000000000,
//!  "payload":{"active":true,"intensity":0.502}}
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pam::{CharacteristicMessage, EnvKind, BASIS_POINTS};
use crate::SnoreClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    ActivityInstantaneous,
    ActivitySummary,
    Environment,
    Alerting,
}

impl EventType {
    pub fn as_str(self) -> &'static str {
        match self {
            EventType::ActivityInstantaneous => "activity_instantaneous",
            EventType::ActivitySummary => "activity_summary",
            EventType::Environment => "environment",
            EventType::Alerting => "alerting",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstantaneousPayload {
    pub p_snore: f64,
    pub p_non_snore: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryPayload {
    pub window_start_ms: u64,
    pub window_end_ms: u64,
    pub class: SnoreClass,
    pub episode_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentPayload {
    pub kind: EnvKind,
    pub value: f64,
    pub unit: EnvUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvUnit {
    Celsius,
    Percent,
    Pascal,
}

impl EnvUnit {
    pub fn for_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Temperature => EnvUnit::Celsius,
            EnvKind::Humidity => EnvUnit::Percent,
            EnvKind::Pressure => EnvUnit::Pascal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlertingPayload {
    pub active: bool,
    pub intensity: f64,
}

/// Payload bodies have disjoint key sets, so the untagged form is unambiguous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EventPayload {
    ActivityInstantaneous(InstantaneousPayload),
    ActivitySummary(SummaryPayload),
    Environment(EnvironmentPayload),
    Alerting(AlertingPayload),
}

impl EventPayload {
    pub fn event_type(&self) -> EventType {
        match self {
            EventPayload::ActivityInstantaneous(_) => EventType::ActivityInstantaneous,
            EventPayload::ActivitySummary(_) => EventType::ActivitySummary,
            EventPayload::Environment(_) => EventType::Environment,
            EventPayload::Alerting(_) => EventType::Alerting,
        }
    }

    /// The total mapping from device messages to event payloads.
    pub fn from_message(msg: &CharacteristicMessage) -> Self {
        match *msg {
            CharacteristicMessage::ActivityInstantaneous { p_snore_bp, p_non_snore_bp, .. } => {
                EventPayload::ActivityInstantaneous(InstantaneousPayload {
                    p_snore: p_snore_bp as f64 / BASIS_POINTS as f64,
                    p_non_snore: p_non_snore_bp as f64 / BASIS_POINTS as f64,
                })
            }
            CharacteristicMessage::ActivitySummary {
                window_start_ms,
                window_end_ms,
                inferred_class,
                episode_count,
            } => EventPayload::ActivitySummary(SummaryPayload {
                window_start_ms,
                window_end_ms,
                class: inferred_class,
                episode_count,
            }),
            CharacteristicMessage::Environment { value, .. } => EventPayload::Environment(EnvironmentPayload {
                kind: value.kind(),
                value: value.as_f64(),
                unit: EnvUnit::for_kind(value.kind()),
            }),
            CharacteristicMessage::Alerting { active, intensity_byte, .. } => EventPayload::Alerting(AlertingPayload {
                active,
                intensity: (intensity_byte as f64 / 255.0 * 1000.0).round() / 1000.0,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayEvent {
    pub device_id: String,
    pub seq: u64,
    #[serde(rename = "type")]
    pub event_type: EventType,
    pub timestamp_ms: u64,
    pub payload: EventPayload,
}

#[derive(Debug, Error, PartialEq)]
pub enum EventError {
    #[error("event type {declared} does not match a {actual} payload")]
    TypeMismatch { declared: &'static str, actual: &'static str },
    #[error("invalid payload: {0}")]
    Payload(String),
}

impl GatewayEvent {
    pub fn new(device_id: impl Into<String>, seq: u64, timestamp_ms: u64, payload: EventPayload) -> Self {
        Self { device_id: device_id.into(), seq, event_type: payload.event_type(), timestamp_ms, payload }
    }

    pub fn validate(&self) -> Result<(), EventError> {
        if self.event_type != self.payload.event_type() {
            return Err(EventError::TypeMismatch {
                declared: self.event_type.as_str(),
                actual: self.payload.event_type().as_str(),
            });
        }
        let unit_interval = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        match self.payload {
            EventPayload::ActivityInstantaneous(p) => {
                if !unit_interval(p.p_snore)
                    || !unit_interval(p.p_non_snore)
                    || (p.p_snore + p.p_non_snore - 1.0).abs() > 1e-6
                {
                    return Err(EventError::Payload("probabilities must lie in [0, 1] and sum to 1".into()));
                }
            }
            EventPayload::ActivitySummary(s) => {
                if s.window_end_ms <= s.window_start_ms {
                    return Err(EventError::Payload("summary window must end after it starts".into()));
                }
            }
            EventPayload::Environment(e) => {
                if !e.value.is_finite() || e.unit != EnvUnit::for_kind(e.kind) {
                    return Err(EventError::Payload(format!("bad {} reading", e.kind.as_str())));
                }
            }
            EventPayload::Alerting(a) => {
                if !unit_interval(a.intensity) || (!a.active && a.intensity != 0.0) {
                    return Err(EventError::Payload("alert intensity must be in [0, 1] and 0 when inactive".into()));
                }
            }
        }
        Ok(())
    }

    /// Parses and validates one event.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let ev: GatewayEvent = serde_json::from_str(text).map_err(|e| e.to_string())?;
        ev.validate().map_err(|e| e.to_string())?;
        Ok(ev)
    }
}
