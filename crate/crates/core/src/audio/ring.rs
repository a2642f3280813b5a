use std::sync::{Arc, Mutex};

use super::window::ms_to_samples;
use super::{AudioClip, AudioError};

/// Circular store holding the most recent `capacity_ms` of a stream.
#[derive(Debug, Clone)]
pub struct RecentAudioRing {
    storage: Vec<f32>,
    sample_rate: u32,
    capacity_ms: u64,
    write_head: usize,
    total_written: u64,
}

impl RecentAudioRing {
    pub fn new(capacity_ms: u64, sample_rate: u32) -> Self {
        let capacity = ms_to_samples(capacity_ms, sample_rate).max(1);
        Self { storage: vec![0.0; capacity], sample_rate, capacity_ms, write_head: 0, total_written: 0 }
    }

    pub fn capacity_ms(&self) -> u64 {
        self.capacity_ms
    }

    pub fn capacity_samples(&self) -> usize {
        self.storage.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn total_written(&self) -> u64 {
        self.total_written
    }

    /// Stream time of the next sample to be written.
    pub fn now_ms(&self) -> u64 {
        self.total_written * 1000 / self.sample_rate as u64
    }

    fn oldest_sample(&self) -> u64 {
        self.total_written.saturating_sub(self.storage.len() as u64)
    }

    /// Earliest millisecond whose first sample is still retained.
    pub fn oldest_ms(&self) -> u64 {
        (self.oldest_sample() * 1000).div_ceil(self.sample_rate as u64)
    }

    pub fn write(&mut self, mut samples: &[f32]) {
        let cap = self.storage.len();
        if samples.len() > cap {
            let skip = samples.len() - cap;
            self.total_written += skip as u64;
            self.write_head = (self.write_head + skip) % cap;
            samples = &samples[skip..];
        }
        while !samples.is_empty() {
            let run = (cap - self.write_head).min(samples.len());
            self.storage[self.write_head..self.write_head + run].copy_from_slice(&samples[..run]);
            self.write_head = (self.write_head + run) % cap;
            self.total_written += run as u64;
            samples = &samples[run..];
        }
    }

    /// Copies `[from_ms, to_ms)` out of the ring.
    pub fn extract(&self, from_ms: u64, to_ms: u64) -> Result<AudioClip, AudioError> {
        if to_ms <= from_ms {
            return Err(AudioError::Range { from_ms, to_ms, reason: "end must be after start" });
        }
        let from = ms_to_samples(from_ms, self.sample_rate) as u64;
        let to = ms_to_samples(to_ms, self.sample_rate) as u64;
        if from < self.oldest_sample() {
            return Err(AudioError::Evicted { from_ms, to_ms, oldest_ms: self.oldest_ms() });
        }
        if to > self.total_written {
            return Err(AudioError::Range { from_ms, to_ms, reason: "end is in the future" });
        }
        let cap = self.storage.len() as u64;
        let mut out = Vec::with_capacity((to - from) as usize);
        let mut pos = from;
        while pos < to {
            let idx = (pos % cap) as usize;
            let run = ((cap - idx as u64).min(to - pos)) as usize;
            out.extend_from_slice(&self.storage[idx..idx + run]);
            pos += run as u64;
        }
        AudioClip::new(out, self.sample_rate)
    }

    pub fn into_shared(self) -> SharedRing {
        SharedRing(Arc::new(Mutex::new(self)))
    }
}

/// Ring handle for one writer and one reader on different threads.
#[derive(Debug, Clone)]
pub struct SharedRing(Arc<Mutex<RecentAudioRing>>);

impl SharedRing {
    pub fn write(&self, samples: &[f32]) {
        self.0.lock().unwrap().write(samples)
    }

    pub fn extract(&self, from_ms: u64, to_ms: u64) -> Result<AudioClip, AudioError> {
        self.0.lock().unwrap().extract(from_ms, to_ms)
    }

    pub fn now_ms(&self) -> u64 {
        self.0.lock().unwrap().now_ms()
    }

    pub fn oldest_ms(&self) -> u64 {
        self.0.lock().unwrap().oldest_ms()
    }
}
