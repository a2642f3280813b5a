use super::dft::{Spectrum, WindowFn};
use super::{FeatureError, Matrix, SpectrogramConfig};
use crate::audio::FrameWindow;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on equally spaced mel points between `fmin` and `fmax`,
/// evaluated at the DFT bin frequencies. Unnormalized (peak weight 1).
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `bands × bins`, row-major.
    weights: Matrix,
    edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &SpectrogramConfig, sample_rate: u32) -> Result<Self, FeatureError> {
        cfg.validate(sample_rate)?;
        let bins = cfg.fft_size / 2 + 1;
        let bands = cfg.mel_bands;
        let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
        let edges_hz: Vec<f64> =
            (0..bands + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (bands + 1) as f64)).collect();
        let bin_hz = sample_rate as f64 / cfg.fft_size as f64;
        let mut weights = Matrix::zeros(bands, bins);
        for m in 0..bands {
            let (left, centre, right) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
            for k in 0..bins {
                let f = k as f64 * bin_hz;
                let w = if f > left && f <= centre {
                    (f - left) / (centre - left)
                } else if f > centre && f < right {
                    (right - f) / (right - centre)
                } else {
                    0.0
                };
                weights.set(m, k, w);
            }
            if weights.row(m).iter().sum::<f64>() <= 0.0 {
                return Err(FeatureError::Config(format!(
                    "mel band {m} ({left:.1}–{right:.1} Hz) contains no DFT bin; use a larger fft size or fewer bands"
                )));
            }
        }
        Ok(Self { weights, edges_hz })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    /// Band edge frequencies, `bands + 2` values from `fmin` to `fmax`.
    pub fn edges_hz(&self) -> &[f64] {
        &self.edges_hz
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        (0..self.weights.rows()).map(|m| self.weights.row(m).iter().zip(power).map(|(w, p)| w * p).sum()).collect()
    }
}

/// Frames per window: `1 + (len − fft)/hop`, or one zero-padded frame when
/// the window is shorter than the FFT.
pub fn frame_count(len: usize, fft_size: usize, hop: usize) -> usize {
    if len <= fft_size {
        1
    } else {
        1 + (len - fft_size) / hop
    }
}

/// Reusable log-mel front end for one configuration and sample rate.
#[derive(Debug, Clone)]
pub struct LogMel {
    cfg: SpectrogramConfig,
    sample_rate: u32,
    spectrum: Spectrum,
    bank: MelFilterbank,
}

impl LogMel {
    pub fn new(cfg: SpectrogramConfig, sample_rate: u32) -> Result<Self, FeatureError> {
        let bank = MelFilterbank::new(&cfg, sample_rate)?;
        Ok(Self { spectrum: Spectrum::new(cfg.fft_size)?, cfg, sample_rate, bank })
    }

    pub fn config(&self) -> &SpectrogramConfig {
        &self.cfg
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    /// `frames × mel_bands` matrix of `ln(mel power + log_floor)`.
    pub fn compute(&self, samples: &[f32]) -> Result<Matrix, FeatureError> {
        let fft = self.cfg.fft_size;
        let hop = self.cfg.frame_hop;
        let frames = frame_count(samples.len(), fft, hop);
        let mut out = Matrix::zeros(frames, self.cfg.mel_bands);
        let mut frame = Vec::with_capacity(fft);
        for t in 0..frames {
            let start = t * hop;
            let end = (start + fft).min(samples.len());
            frame.clear();
            frame.extend(samples[start.min(end)..end].iter().map(|&s| s as f64));
            let power = self.spectrum.power(&frame, WindowFn::Hann)?;
            for (m, e) in self.bank.apply(&power).into_iter().enumerate() {
                out.set(t, m, (e + self.cfg.log_floor).ln());
            }
        }
        if out.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::Numeric("non-finite log-mel value".into()));
        }
        Ok(out)
    }
}

pub fn log_mel(window: &FrameWindow, cfg: &SpectrogramConfig) -> Result<Matrix, FeatureError> {
    LogMel::new(cfg.clone(), window.sample_rate)?.compute(&window.samples)
}
