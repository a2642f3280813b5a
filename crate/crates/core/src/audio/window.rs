use super::AudioClip;

/// Fixed-length analysis window cut from a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameWindow {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    /// Offset of the first sample from the start of the stream.
    pub start_ms: u64,
}

impl FrameWindow {
    pub fn duration_ms(&self) -> u64 {
        self.samples.len() as u64 * 1000 / self.sample_rate as u64
    }
}

pub(crate) fn ms_to_samples(ms: u64, sample_rate: u32) -> usize {
    (ms * sample_rate as u64 / 1000) as usize
}

/// Number of full windows in a stream of `len` samples.
pub fn window_count(len: usize, sample_rate: u32, window_len_ms: u64, hop_ms: u64) -> usize {
    let win = ms_to_samples(window_len_ms, sample_rate);
    let hop = ms_to_samples(hop_ms, sample_rate);
    if hop == 0 || win == 0 || len < win {
        return 0;
    }
    (len - win) / hop + 1
}

/// Windows starting at `0, hop, 2·hop, …`; a trailing partial window is dropped.
///
/// Panics if `hop_ms` is zero or exceeds `window_len_ms`.
pub fn stream_windows(clip: &AudioClip, window_len_ms: u64, hop_ms: u64) -> Vec<FrameWindow> {
    assert!(hop_ms > 0 && window_len_ms >= hop_ms, "need window_len_ms >= hop_ms > 0");
    let rate = clip.sample_rate();
    let win = ms_to_samples(window_len_ms, rate);
    let hop = ms_to_samples(hop_ms, rate);
    let count = window_count(clip.len(), rate, window_len_ms, hop_ms);
    (0..count)
        .map(|k| FrameWindow {
            samples: clip.samples()[k * hop..k * hop + win].to_vec(),
            sample_rate: rate,
            start_ms: k as u64 * hop_ms,
        })
        .collect()
}
