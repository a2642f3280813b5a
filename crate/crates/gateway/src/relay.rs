use kw_core::event::{EventPayload, GatewayEvent};
use kw_core::pam::{Central, CharacteristicMessage};

/// Maps device messages to gateway events with the gateway's own sequence.
#[derive(Debug, Clone)]
pub struct Relay {
    device_id: String,
    origin_ms: u64,
    next_seq: u64,
}

impl Relay {
    /// `origin_ms` is the wall-clock time of device time zero.
    pub fn new(device_id: impl Into<String>, origin_ms: u64, first_seq: u64) -> Self {
        Self { device_id: device_id.into(), origin_ms, next_seq: first_seq }
    }

    pub fn map(&mut self, msg: &CharacteristicMessage) -> GatewayEvent {
        let ev = GatewayEvent::new(
            self.device_id.clone(),
            self.next_seq,
            self.origin_ms + msg.timestamp_ms(),
            EventPayload::from_message(msg),
        );
        self.next_seq += 1;
        ev
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn origin_ms(&self) -> u64 {
        self.origin_ms
    }
}

/// Every message the central delivers, as events. Frames that fail to
/// decode are counted in the central's stats and skipped.
pub fn relay(central: Central, mut relay: Relay) -> impl Iterator<Item = GatewayEvent> {
    central.map(move |r| relay.map(&r.message))
}
