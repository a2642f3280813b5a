//! Two-bank capture buffer between one writer and one reader.
//!
//! The writer owns the active bank and fills it sample by sample. When the
//! bank is full it is swapped into the hand-off slot and the writer continues
//! with the spare bank. If the reader has not yet taken the previous bank the
//! writer blocks, so no audio is ever dropped or duplicated.

use std::mem;
use std::sync::{Arc, Condvar, Mutex};

#[derive(Debug)]
struct Shared {
    full: Option<Vec<f32>>,
    spare: Option<Vec<f32>>,
    tail: Option<Vec<f32>>,
    closed: bool,
    /// The reader was dropped; further audio is discarded.
    abandoned: bool,
}

#[derive(Debug)]
struct Inner {
    state: Mutex<Shared>,
    ready: Condvar,
}

pub fn double_buffer(bank_len: usize) -> (BankWriter, BankReader) {
    assert!(bank_len > 0, "bank length must be positive");
    let inner = Arc::new(Inner {
        state: Mutex::new(Shared {
            full: None,
            spare: Some(Vec::with_capacity(bank_len)),
            tail: None,
            closed: false,
            abandoned: false,
        }),
        ready: Condvar::new(),
    });
    (
        BankWriter {
            inner: inner.clone(),
            bank_len,
            active: Vec::with_capacity(bank_len),
            active_bank: 0,
            banks_handed: 0,
        },
        BankReader { inner, banks_taken: 0 },
    )
}

#[derive(Debug)]
pub struct BankWriter {
    inner: Arc<Inner>,
    bank_len: usize,
    active: Vec<f32>,
    active_bank: usize,
    banks_handed: u64,
}

impl BankWriter {
    pub fn bank_len(&self) -> usize {
        self.bank_len
    }

    /// Index (0 or 1) of the bank currently being filled.
    pub fn active_bank(&self) -> usize {
        self.active_bank
    }

    pub fn fill_count(&self) -> usize {
        self.active.len()
    }

    pub fn banks_handed(&self) -> u64 {
        self.banks_handed
    }

    pub fn write(&mut self, mut samples: &[f32]) {
        while !samples.is_empty() {
            let room = self.bank_len - self.active.len();
            let take = room.min(samples.len());
            self.active.extend_from_slice(&samples[..take]);
            samples = &samples[take..];
            if self.active.len() == self.bank_len {
                self.hand_off();
            }
        }
    }

    fn hand_off(&mut self) {
        let mut state = self.inner.state.lock().unwrap();
        while state.full.is_some() && !state.abandoned {
            state = self.inner.ready.wait(state).unwrap();
        }
        if state.abandoned {
            self.active.clear();
            return;
        }
        let mut next = state.spare.take().unwrap_or_else(|| Vec::with_capacity(self.bank_len));
        next.clear();
        state.full = Some(mem::replace(&mut self.active, next));
        self.active_bank ^= 1;
        self.banks_handed += 1;
        self.inner.ready.notify_all();
    }

    /// Ends the stream. The partially filled bank is not handed off as a
    /// bank; it becomes available through [`BankReader::remainder`].
    pub fn close(mut self) {
        let mut state = self.inner.state.lock().unwrap();
        state.tail = Some(mem::take(&mut self.active));
        state.closed = true;
        self.inner.ready.notify_all();
    }
}

impl Drop for BankWriter {
    fn drop(&mut self) {
        if let Ok(mut state) = self.inner.state.lock() {
            if !state.closed {
                state.tail = Some(mem::take(&mut self.active));
                state.closed = true;
                self.inner.ready.notify_all();
            }
        }
    }
}

#[derive(Debug)]
pub struct BankReader {
    inner: Arc<Inner>,
    banks_taken: u64,
}

impl BankReader {
    /// Blocks for the next full bank; `None` once the writer closed and every
    /// full bank was consumed.
    pub fn recv(&mut self) -> Option<Vec<f32>> {
        let mut state = self.inner.state.lock().unwrap();
        loop {
            if let Some(bank) = state.full.take() {
                self.banks_taken += 1;
                self.inner.ready.notify_all();
                return Some(bank);
            }
            if state.closed {
                return None;
            }
            state = self.inner.ready.wait(state).unwrap();
        }
    }

    /// Returns a consumed bank for reuse by the writer.
    pub fn recycle(&mut self, bank: Vec<f32>) {
        let mut state = self.inner.state.lock().unwrap();
        if state.spare.is_none() {
            state.spare = Some(bank);
        }
    }

    pub fn banks_taken(&self) -> u64 {
        self.banks_taken
    }

    /// Samples written after the last full bank. Empty until the writer closes.
    pub fn remainder(&mut self) -> Vec<f32> {
        let mut state = self.inner.state.lock().unwrap();
        state.tail.take().unwrap_or_default()
    }
}

impl Drop for BankReader {
    fn drop(&mut self) {
        if let Ok(mut state) = self.inner.state.lock() {
            state.abandoned = true;
            self.inner.ready.notify_all();
        }
    }
}
