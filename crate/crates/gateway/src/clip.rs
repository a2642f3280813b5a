use kw_core::audio::{AudioClip, AudioError, RecentAudioRing};
use kw_core::SnoreClass;
use thiserror::Error;

/// Audio kept either side of an episode.
pub const EPISODE_PAD_MS: u64 = 5_000;
/// How much recent audio the gateway retains.
pub const RING_RETENTION_MS: u64 = 60_000;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeClip {
    pub episode_start_ms: u64,
    pub episode_end_ms: u64,
    /// The range actually covered by `audio`.
    pub clip_start_ms: u64,
    pub clip_end_ms: u64,
    pub audio: AudioClip,
}

#[derive(Debug, Error)]
pub enum ClipError {
    #[error("episode [{start_ms}, {end_ms}) ms is no longer in the ring (oldest {oldest_ms} ms)")]
    Evicted { start_ms: u64, end_ms: u64, oldest_ms: u64 },
    #[error("invalid episode range [{start_ms}, {end_ms}) ms")]
    Range { start_ms: u64, end_ms: u64 },
    #[error(transparent)]
    Audio(#[from] AudioError),
}

/// Cuts `[start - pad, end + pad)` out of the ring, clamped to what it
/// still holds.
pub fn clip_episode(ring: &RecentAudioRing, start_ms: u64, end_ms: u64, pad_ms: u64) -> Result<EpisodeClip, ClipError> {
    if end_ms <= start_ms {
        return Err(ClipError::Range { start_ms, end_ms });
    }
    let oldest = ring.oldest_ms();
    let now = ring.now_ms();
    if end_ms <= oldest {
        return Err(ClipError::Evicted { start_ms, end_ms, oldest_ms: oldest });
    }
    let from = start_ms.saturating_sub(pad_ms).max(oldest);
    let to = end_ms.saturating_add(pad_ms).min(now);
    if to <= from {
        return Err(ClipError::Range { start_ms, end_ms });
    }
    let audio = ring.extract(from, to)?;
    Ok(EpisodeClip { episode_start_ms: start_ms, episode_end_ms: end_ms, clip_start_ms: from, clip_end_ms: to, audio })
}

/// Follows summary class changes and reports completed snoring episodes.
#[derive(Debug, Clone, Default)]
pub struct EpisodeTracker {
    open: Option<u64>,
}

impl EpisodeTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open_since(&self) -> Option<u64> {
        self.open
    }

    /// Feeds one summary; returns `(start, end)` when an episode closes.
    pub fn on_summary(&mut self, window_start_ms: u64, class: SnoreClass) -> Option<(u64, u64)> {
        match (self.open, class) {
            (None, SnoreClass::Snoring) => {
                self.open = Some(window_start_ms);
                None
            }
            (Some(start), SnoreClass::NonSnoring) => {
                self.open = None;
                Some((start, window_start_ms))
            }
            _ => None,
        }
    }

    /// Closes an episode still running when the stream ends.
    pub fn finish(&mut self, end_ms: u64) -> Option<(u64, u64)> {
        self.open.take().filter(|&s| end_ms > s).map(|s| (s, end_ms))
    }
}
