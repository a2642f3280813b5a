//! Audio-to-image front end: log-mel spectrogram, bilinear resize to the CNN
//! input side, min-max normalization.

mod dft;
mod image;
mod mel;

pub use dft::{dft_magnitude, Spectrum, WindowFn};
pub use image::{normalize, resize_bilinear, FeatureImage, InputSide, Matrix};
pub use mel::{frame_count, hz_to_mel, log_mel, mel_to_hz, LogMel, MelFilterbank};

use serde::{Deserialize, Serialize};

use crate::audio::FrameWindow;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("invalid spectrogram configuration: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("shape error: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramConfig {
    pub fft_size: usize,
    pub frame_hop: usize,
    pub mel_bands: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        Self { fft_size: 512, frame_hop: 256, mel_bands: 40, fmin: 20.0, fmax: 8000.0, log_floor: 1e-10 }
    }
}

impl SpectrogramConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<(), FeatureError> {
        if self.fft_size < 2 || !self.fft_size.is_power_of_two() {
            return Err(FeatureError::Config(format!("fft_size {} is not a power of two", self.fft_size)));
        }
        if self.frame_hop == 0 {
            return Err(FeatureError::Config("frame_hop must be positive".into()));
        }
        if self.mel_bands < 2 {
            return Err(FeatureError::Config("need at least 2 mel bands".into()));
        }
        let nyquist = sample_rate as f64 / 2.0;
        if !(self.fmin > 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(FeatureError::Config(format!(
                "need 0 < fmin < fmax <= {nyquist} Hz, got fmin {} fmax {}",
                self.fmin, self.fmax
            )));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return Err(FeatureError::Config("log_floor must be a small positive constant".into()));
        }
        Ok(())
    }
}

/// Converts a `frames × bands` log-mel matrix into image orientation: one row
/// per band with the highest band on top, one column per frame.
pub fn to_image_orientation(log_mel: &Matrix) -> Matrix {
    let (frames, bands) = (log_mel.rows(), log_mel.cols());
    let mut out = Matrix::zeros(bands, frames);
    for t in 0..frames {
        for m in 0..bands {
            out.set(bands - 1 - m, t, log_mel.get(t, m));
        }
    }
    out
}

/// Full front end with the filterbank and FFT plan built once.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    log_mel: LogMel,
    side: InputSide,
}

impl FeatureExtractor {
    pub fn new(cfg: SpectrogramConfig, sample_rate: u32, side: InputSide) -> Result<Self, FeatureError> {
        Ok(Self { log_mel: LogMel::new(cfg, sample_rate)?, side })
    }

    pub fn side(&self) -> InputSide {
        self.side
    }

    pub fn sample_rate(&self) -> u32 {
        self.log_mel.sample_rate()
    }

    pub fn extract_samples(&self, samples: &[f32]) -> Result<FeatureImage, FeatureError> {
        let spec = self.log_mel.compute(samples)?;
        let side = self.side.get();
        let resized = resize_bilinear(&to_image_orientation(&spec), side, side)?;
        normalize(&resized)
    }

    pub fn extract(&self, window: &FrameWindow) -> Result<FeatureImage, FeatureError> {
        if window.sample_rate != self.sample_rate() {
            return Err(FeatureError::Shape(format!(
                "window sampled at {} Hz, extractor expects {} Hz",
                window.sample_rate,
                self.sample_rate()
            )));
        }
        self.extract_samples(&window.samples)
    }
}

/// log-mel → resize → normalize.
pub fn extract(window: &FrameWindow, cfg: &SpectrogramConfig, side: InputSide) -> Result<FeatureImage, FeatureError> {
    FeatureExtractor::new(cfg.clone(), window.sample_rate, side)?.extract(window)
}
