use std::f64::consts::TAU;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::FeatureError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowFn {
    Rectangular,
    /// Periodic Hann, `0.5 − 0.5·cos(2πn/L)` over the frame length `L`.
    Hann,
}

pub(crate) fn hann(len: usize) -> Vec<f64> {
    (0..len).map(|n| 0.5 - 0.5 * (TAU * n as f64 / len as f64).cos()).collect()
}

/// Planned real-input DFT of a fixed size.
#[derive(Clone)]
pub struct Spectrum {
    fft_size: usize,
    plan: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectrum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectrum").field("fft_size", &self.fft_size).finish()
    }
}

impl Spectrum {
    pub fn new(fft_size: usize) -> Result<Self, FeatureError> {
        if fft_size == 0 || !fft_size.is_power_of_two() {
            return Err(FeatureError::Config(format!("fft size {fft_size} is not a power of two")));
        }
        let plan = FftPlanner::new().plan_fft_forward(fft_size);
        Ok(Self { fft_size, plan })
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    fn transform(&self, frame: &[f64], window: WindowFn) -> Result<Vec<Complex64>, FeatureError> {
        if frame.len() > self.fft_size {
            return Err(FeatureError::Shape(format!(
                "frame of {} samples exceeds fft size {}",
                frame.len(),
                self.fft_size
            )));
        }
        if frame.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::Numeric("non-finite sample in frame".into()));
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_size];
        match window {
            WindowFn::Rectangular => {
                for (b, &x) in buf.iter_mut().zip(frame) {
                    b.re = x;
                }
            }
            WindowFn::Hann => {
                for ((b, &x), w) in buf.iter_mut().zip(frame).zip(hann(frame.len())) {
                    b.re = x * w;
                }
            }
        }
        self.plan.process(&mut buf);
        buf.truncate(self.bins());
        Ok(buf)
    }

    /// `|X[k]|` for `k = 0..=N/2`; shorter frames are zero-padded.
    pub fn magnitude(&self, frame: &[f64], window: WindowFn) -> Result<Vec<f64>, FeatureError> {
        Ok(self.transform(frame, window)?.into_iter().map(|c| c.norm()).collect())
    }

    pub fn power(&self, frame: &[f64], window: WindowFn) -> Result<Vec<f64>, FeatureError> {
        Ok(self.transform(frame, window)?.into_iter().map(|c| c.norm_sqr()).collect())
    }
}

/// One-shot Hann-windowed magnitude spectrum.
pub fn dft_magnitude(frame: &[f64], fft_size: usize) -> Result<Vec<f64>, FeatureError> {
    Spectrum::new(fft_size)?.magnitude(frame, WindowFn::Hann)
}
