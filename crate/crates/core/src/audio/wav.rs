use std::fs;
use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavReader};

use super::{AudioClip, AudioError};

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let bytes = fs::read(path)?;
    decode_wav(&bytes)
}

/// Decodes integer PCM (8/16/24/32-bit) or 32-bit float WAV, downmixing
/// channels by their arithmetic mean.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, AudioError> {
    let reader = WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.channels == 0 {
        return Err(AudioError::Format("zero channels".into()));
    }
    if spec.sample_rate == 0 {
        return Err(AudioError::Format("zero sample rate".into()));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => collect(reader.into_samples::<f32>(), |s| s)?,
        (SampleFormat::Float, bits) => {
            return Err(AudioError::Unsupported(format!("{bits}-bit float")));
        }
        (SampleFormat::Int, 8) => collect(reader.into_samples::<i8>(), |s| s as f32 / 128.0)?,
        (SampleFormat::Int, 16) => collect(reader.into_samples::<i16>(), |s| s as f32 / 32_768.0)?,
        (SampleFormat::Int, 24) => collect(reader.into_samples::<i32>(), |s| (s as f64 / 8_388_608.0) as f32)?,
        (SampleFormat::Int, 32) => collect(reader.into_samples::<i32>(), |s| (s as f64 / 2_147_483_648.0) as f32)?,
        (SampleFormat::Int, bits) => {
            return Err(AudioError::Unsupported(format!("{bits}-bit integer PCM")));
        }
    };
    if interleaved.iter().any(|s| !s.is_finite()) {
        return Err(AudioError::Format("non-finite float sample".into()));
    }
    let channels = spec.channels as usize;
    let mono = if channels == 1 {
        interleaved
    } else {
        interleaved.chunks_exact(channels).map(|frame| frame.iter().sum::<f32>() / channels as f32).collect()
    };
    AudioClip::from_samples_clamped(mono, spec.sample_rate)
}

fn collect<S, I>(samples: I, scale: impl Fn(S) -> f32) -> Result<Vec<f32>, AudioError>
where
    I: Iterator<Item = hound::Result<S>>,
{
    samples.map(|s| s.map(&scale).map_err(map_hound)).collect()
}

fn map_hound(err: hound::Error) -> AudioError {
    match err {
        hound::Error::Unsupported => AudioError::Unsupported("compressed or unknown codec".into()),
        // Decoding reads from memory, so any I/O failure means the bytes ran out.
        hound::Error::IoError(e) => AudioError::Format(format!("truncated or unreadable: {e}")),
        other => AudioError::Format(other.to_string()),
    }
}

/// Quantizes one sample to signed 16-bit, clamping `1.0` to `i16::MAX`.
pub(crate) fn quantize_i16(sample: f32) -> i16 {
    (sample as f64 * 32_768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Canonical 16-bit PCM mono WAV with a 44-byte header.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let data_len = (clip.len() * 2) as u32;
    let rate = clip.sample_rate();
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in clip.samples() {
        out.extend_from_slice(&quantize_i16(s).to_le_bytes());
    }
    out
}

pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    fs::write(path, encode_wav(clip))?;
    Ok(())
}
