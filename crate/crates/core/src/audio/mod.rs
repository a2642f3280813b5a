//! PCM audio: clips, WAV I/O, windowing, capture buffers and the synthetic corpus.

mod double_buffer;
mod manifest;
mod ring;
mod synth;
mod wav;
mod window;

pub use double_buffer::{double_buffer, BankReader, BankWriter};
pub use manifest::{parse_manifest, read_manifest, write_manifest, ManifestEntry};
pub use ring::{RecentAudioRing, SharedRing};
pub use synth::{synth_corpus, synth_corpus_detailed, synth_night, NightPlan, SynthKind, SYNTH_CLIP_MS};
pub use wav::{decode_wav, encode_wav, load_wav, save_wav};
pub use window::{stream_windows, window_count, FrameWindow};

use crate::SnoreClass;

/// Canonical pipeline sample rate.
pub const CANONICAL_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("malformed audio: {0}")]
    Format(String),
    #[error("unsupported audio encoding: {0}")]
    Unsupported(String),
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error("range [{from_ms}, {to_ms}) ms is no longer retained (oldest retained {oldest_ms} ms)")]
    Evicted { from_ms: u64, to_ms: u64, oldest_ms: u64 },
    #[error("invalid range [{from_ms}, {to_ms}) ms: {reason}")]
    Range { from_ms: u64, to_ms: u64, reason: &'static str },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono PCM audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
    pub label: Option<SnoreClass>,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidClip("sample rate must be positive".into()));
        }
        if let Some(bad) = samples.iter().position(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(AudioError::InvalidClip(format!("sample {bad} = {} outside [-1, 1]", samples[bad])));
        }
        Ok(Self { samples, sample_rate, label: None })
    }

    /// Builds a clip, clamping out-of-range values and zeroing non-finite ones.
    pub fn from_samples_clamped(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        let samples = samples.into_iter().map(|s| if s.is_finite() { s.clamp(-1.0, 1.0) } else { 0.0 }).collect();
        Self::new(samples, sample_rate)
    }

    pub fn with_label(mut self, label: SnoreClass) -> Self {
        self.label = Some(label);
        self
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_ms(&self) -> u64 {
        self.samples.len() as u64 * 1000 / self.sample_rate as u64
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Linear-interpolation resampling. Returns a copy when the rate already matches.
    pub fn resample(&self, target_rate: u32) -> Result<AudioClip, AudioError> {
        if target_rate == 0 {
            return Err(AudioError::InvalidClip("target sample rate must be positive".into()));
        }
        if target_rate == self.sample_rate || self.samples.is_empty() {
            let mut out = AudioClip::new(self.samples.clone(), target_rate)?;
            out.label = self.label;
            return Ok(out);
        }
        let ratio = self.sample_rate as f64 / target_rate as f64;
        let out_len = (self.samples.len() as u64 * target_rate as u64 / self.sample_rate as u64) as usize;
        let last = self.samples.len() - 1;
        let samples = (0..out_len)
            .map(|i| {
                let pos = i as f64 * ratio;
                let lo = (pos.floor() as usize).min(last);
                let hi = (lo + 1).min(last);
                let frac = (pos - lo as f64) as f32;
                self.samples[lo] * (1.0 - frac) + self.samples[hi] * frac
            })
            .collect();
        let mut out = AudioClip::from_samples_clamped(samples, target_rate)?;
        out.label = self.label;
        Ok(out)
    }

    /// Root-mean-square amplitude of a sample range.
    pub fn rms(samples: &[f32]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        (samples.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / samples.len() as f64).sqrt()
    }
}
