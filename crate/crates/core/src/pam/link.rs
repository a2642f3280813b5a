//! In-process stand-in for the radio link.
//!
//! Every transmission attempt draws three uniforms from the link's seeded
//! RNG, in order: drop, duplicate, corrupt. A corrupted attempt draws one
//! more value, the index of the bit to flip. Notifications are sent once;
//! indications are retried until an attempt arrives intact.

use std::time::Duration;

use crossbeam_channel::{Receiver, RecvTimeoutError, Sender};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::frame::LinkFrame;
use super::message::{CharId, CharacteristicMessage};
use super::PamError;

/// Upper bound on attempts for one indication.
pub const MAX_INDICATION_ATTEMPTS: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FaultConfig {
    pub drop_rate: f64,
    pub dup_rate: f64,
    pub corrupt_rate: f64,
    pub seed: u64,
}

impl FaultConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), PamError> {
        for (name, r) in [("drop", self.drop_rate), ("duplication", self.dup_rate), ("corruption", self.corrupt_rate)] {
            if !(0.0..1.0).contains(&r) {
                return Err(PamError::Config(format!("{name} rate {r} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    /// Fire and forget.
    Notify,
    /// Retransmitted until confirmed.
    Indicate,
}

impl Delivery {
    /// Per-sample probabilities are notified; state changes are indicated.
    pub fn for_char(id: CharId) -> Self {
        match id {
            CharId::ActivityInstantaneous => Delivery::Notify,
            _ => Delivery::Indicate,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeripheralStats {
    pub messages: u64,
    pub attempts: u64,
    pub dropped: u64,
    pub duplicated: u64,
    pub corrupted: u64,
    pub retransmissions: u64,
    pub undelivered: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CentralStats {
    pub frames: u64,
    pub delivered: u64,
    pub duplicates: u64,
    /// Sequence numbers never seen.
    pub gaps: u64,
    pub crc_failures: u64,
    pub malformed: u64,
}

pub fn link(faults: FaultConfig) -> Result<(Peripheral, Central), PamError> {
    faults.validate()?;
    let (tx, rx) = crossbeam_channel::unbounded();
    let peripheral = Peripheral {
        tx,
        rng: ChaCha8Rng::seed_from_u64(faults.seed),
        faults,
        next_seq: 0,
        stats: PeripheralStats::default(),
    };
    Ok((peripheral, Central { rx, last_seq: None, stats: CentralStats::default() }))
}

pub struct Peripheral {
    tx: Sender<Vec<u8>>,
    rng: ChaCha8Rng,
    faults: FaultConfig,
    next_seq: u32,
    stats: PeripheralStats,
}

impl Peripheral {
    pub fn send(&mut self, msg: &CharacteristicMessage) -> Result<u32, PamError> {
        self.send_with(msg, Delivery::for_char(msg.char_id()))
    }

    /// Frames and transmits `msg`, returning its link sequence number.
    pub fn send_with(&mut self, msg: &CharacteristicMessage, delivery: Delivery) -> Result<u32, PamError> {
        let seq = self.next_seq;
        let bytes = LinkFrame::for_message(seq, msg)?.encode();
        self.next_seq = self.next_seq.wrapping_add(1);
        self.stats.messages += 1;
        let attempts = match delivery {
            Delivery::Notify => 1,
            Delivery::Indicate => MAX_INDICATION_ATTEMPTS,
        };
        for attempt in 0..attempts {
            if attempt > 0 {
                self.stats.retransmissions += 1;
            }
            if self.transmit(&bytes)? {
                return Ok(seq);
            }
        }
        if delivery == Delivery::Indicate {
            self.stats.undelivered += 1;
            return Err(PamError::Undelivered { seq, attempts });
        }
        Ok(seq)
    }

    /// One attempt; true when the frame reached the central intact.
    fn transmit(&mut self, bytes: &[u8]) -> Result<bool, PamError> {
        self.stats.attempts += 1;
        let u_drop: f64 = self.rng.random();
        let u_dup: f64 = self.rng.random();
        let u_corrupt: f64 = self.rng.random();
        let mut wire = bytes.to_vec();
        let corrupted = u_corrupt < self.faults.corrupt_rate;
        if corrupted {
            let bit = self.rng.random_range(0..wire.len() * 8);
            wire[bit / 8] ^= 1 << (bit % 8);
            self.stats.corrupted += 1;
        }
        if u_drop < self.faults.drop_rate {
            self.stats.dropped += 1;
            return Ok(false);
        }
        let copies = if u_dup < self.faults.dup_rate {
            self.stats.duplicated += 1;
            2
        } else {
            1
        };
        for _ in 0..copies {
            self.tx.send(wire.clone()).map_err(|_| PamError::Closed)?;
        }
        Ok(!corrupted)
    }

    pub fn stats(&self) -> PeripheralStats {
        self.stats
    }

    pub fn next_seq(&self) -> u32 {
        self.next_seq
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Received {
    pub seq: u32,
    pub message: CharacteristicMessage,
}

pub struct Central {
    rx: Receiver<Vec<u8>>,
    last_seq: Option<u32>,
    stats: CentralStats,
}

impl Central {
    /// Next in-order message, blocking. `None` once the peripheral is gone
    /// and the queue is drained.
    pub fn recv(&mut self) -> Option<Received> {
        loop {
            let bytes = self.rx.recv().ok()?;
            if let Some(r) = self.accept(&bytes) {
                return Some(r);
            }
        }
    }

    /// Like [`Central::recv`] but gives up after `timeout` with `Ok(None)`.
    /// `Err(())` means the link is closed and drained.
    #[allow(clippy::result_unit_err)]
    pub fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Received>, ()> {
        loop {
            match self.rx.recv_timeout(timeout) {
                Ok(bytes) => {
                    if let Some(r) = self.accept(&bytes) {
                        return Ok(Some(r));
                    }
                }
                Err(RecvTimeoutError::Timeout) => return Ok(None),
                Err(RecvTimeoutError::Disconnected) => return Err(()),
            }
        }
    }

    fn accept(&mut self, bytes: &[u8]) -> Option<Received> {
        self.stats.frames += 1;
        let frame = match LinkFrame::decode(bytes) {
            Ok(f) => f,
            Err(PamError::Crc { .. }) => {
                self.stats.crc_failures += 1;
                return None;
            }
            Err(_) => {
                self.stats.malformed += 1;
                return None;
            }
        };
        let expected = self.last_seq.map_or(0, |s| s as u64 + 1);
        if (frame.seq as u64) < expected {
            self.stats.duplicates += 1;
            return None;
        }
        self.stats.gaps += frame.seq as u64 - expected;
        self.last_seq = Some(frame.seq);
        match frame.message() {
            Ok(message) => {
                self.stats.delivered += 1;
                Some(Received { seq: frame.seq, message })
            }
            Err(_) => {
                self.stats.malformed += 1;
                None
            }
        }
    }

    pub fn stats(&self) -> CentralStats {
        self.stats
    }
}

impl Iterator for Central {
    type Item = Received;

    fn next(&mut self) -> Option<Received> {
        self.recv()
    }
}
