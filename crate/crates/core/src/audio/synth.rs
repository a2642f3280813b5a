//! Deterministic synthetic snore / non-snore corpus.
//!
//! Snore clips are low harmonic stacks (fundamental 60–280 Hz, harmonics
//! rolling off as 1/h²) under a slow breathing envelope at 0.2–0.5 Hz, with a
//! little low-frequency breath noise. Non-snore clips cycle through broadband
//! noise, tones at or above 500 Hz, near-silence, and gated mixtures of the
//! three. Every clip draws from its own ChaCha stream so clip `i` does not
//! depend on how many clips were generated before it.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::window::ms_to_samples;
use super::AudioClip;
use crate::SnoreClass;

/// Length of each corpus clip.
pub const SYNTH_CLIP_MS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SynthKind {
    Snore,
    Noise,
    Tone,
    Silence,
    Mixture,
}

impl SynthKind {
    pub fn class(self) -> SnoreClass {
        match self {
            SynthKind::Snore => SnoreClass::Snoring,
            _ => SnoreClass::NonSnoring,
        }
    }

    const NON_SNORE: [SynthKind; 4] = [SynthKind::Noise, SynthKind::Tone, SynthKind::Silence, SynthKind::Mixture];
}

fn clip_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn white(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| normal.sample(rng) * std).collect()
}

/// Leaky-integrated white noise scaled to the given RMS.
fn brown(rng: &mut ChaCha8Rng, n: usize, rms: f64) -> Vec<f64> {
    let w = white(rng, n, 1.0);
    let mut acc = 0.0;
    let mut out: Vec<f64> = w
        .iter()
        .map(|x| {
            acc = 0.97 * acc + x;
            acc
        })
        .collect();
    let cur = (out.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
    if cur > 0.0 {
        out.iter_mut().for_each(|v| *v *= rms / cur);
    }
    out
}

fn snore(rng: &mut ChaCha8Rng, n: usize, rate: u32) -> Vec<f64> {
    let sr = rate as f64;
    let f0 = rng.random_range(60.0..280.0);
    let burst_hz = rng.random_range(0.2..0.5);
    let peak_t = rng.random_range(0.3..0.7) * n as f64 / sr;
    let amp = rng.random_range(0.3..0.8);
    let vibrato_hz = rng.random_range(3.0..8.0);
    let vibrato_depth = rng.random_range(0.0..0.03);
    let phases: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..TAU)).collect();
    let breath = brown(rng, n, 0.01);
    let mut phase = 0.0;
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let f = f0 * (1.0 + vibrato_depth * (TAU * vibrato_hz * t).sin());
            phase += TAU * f / sr;
            let tone: f64 = (1..=4).map(|h| (h as f64 * phase + phases[h - 1]).sin() / (h * h) as f64).sum();
            let envelope = 0.5 * (1.0 + (TAU * burst_hz * (t - peak_t)).cos());
            amp * envelope * tone / 1.5 + breath[i]
        })
        .collect()
}

fn tones(rng: &mut ChaCha8Rng, n: usize, rate: u32) -> Vec<f64> {
    let sr = rate as f64;
    let count = rng.random_range(1..=3);
    let parts: Vec<(f64, f64, f64)> = (0..count)
        .map(|_| {
            (
                rng.random_range(500.0..4000.0_f64.min(sr / 2.0 - 100.0)),
                rng.random_range(0.1..0.4),
                rng.random_range(0.0..TAU),
            )
        })
        .collect();
    let floor = white(rng, n, 0.002);
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            parts.iter().map(|&(f, a, p)| a * (TAU * f * t + p).sin()).sum::<f64>() + floor[i]
        })
        .collect()
}

fn non_snore(kind: SynthKind, rng: &mut ChaCha8Rng, n: usize, rate: u32) -> Vec<f64> {
    match kind {
        SynthKind::Noise => {
            let std = rng.random_range(0.05..0.3);
            white(rng, n, std)
        }
        SynthKind::Tone => tones(rng, n, rate),
        SynthKind::Silence => {
            if rng.random_bool(0.5) {
                vec![0.0; n]
            } else {
                let std = rng.random_range(1e-4..2e-3);
                white(rng, n, std)
            }
        }
        SynthKind::Mixture => {
            let std = rng.random_range(0.02..0.2);
            let noise = white(rng, n, std);
            let tone = tones(rng, n, rate);
            let gate_start = rng.random_range(0..n / 2);
            let gate_end = rng.random_range(n / 2..n);
            (0..n)
                .map(|i| {
                    let gated = if (gate_start..gate_end).contains(&i) { tone[i] } else { 0.0 };
                    noise[i] + gated * 0.7
                })
                .collect()
        }
        SynthKind::Snore => snore(rng, n, rate),
    }
}

fn to_clip(samples: Vec<f64>, rate: u32) -> AudioClip {
    AudioClip::from_samples_clamped(samples.into_iter().map(|s| s as f32).collect(), rate)
        .expect("positive sample rate")
}

/// Balanced corpus with the generator kind of every clip, alternating
/// snore / non-snore.
pub fn synth_corpus_detailed(seed: u64, n_per_class: usize, sample_rate: u32) -> Vec<(AudioClip, SynthKind)> {
    assert!(n_per_class > 0, "n_per_class must be positive");
    let n = ms_to_samples(SYNTH_CLIP_MS, sample_rate);
    let mut out = Vec::with_capacity(2 * n_per_class);
    for i in 0..n_per_class {
        let mut rng = clip_rng(seed, 2 * i as u64);
        let clip = to_clip(snore(&mut rng, n, sample_rate), sample_rate).with_label(SnoreClass::Snoring);
        out.push((clip, SynthKind::Snore));

        let kind = SynthKind::NON_SNORE[i % SynthKind::NON_SNORE.len()];
        let mut rng = clip_rng(seed, 2 * i as u64 + 1);
        let clip = to_clip(non_snore(kind, &mut rng, n, sample_rate), sample_rate).with_label(SnoreClass::NonSnoring);
        out.push((clip, kind));
    }
    out
}

pub fn synth_corpus(seed: u64, n_per_class: usize, sample_rate: u32) -> Vec<AudioClip> {
    synth_corpus_detailed(seed, n_per_class, sample_rate).into_iter().map(|(c, _)| c).collect()
}

/// Layout of a synthetic night recording.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NightPlan {
    pub duration_ms: u64,
    /// Snoring intervals `[start_ms, end_ms)`, aligned to whole seconds.
    pub episodes: Vec<(u64, u64)>,
}

impl NightPlan {
    pub fn is_snoring_at(&self, t_ms: u64) -> bool {
        self.episodes.iter().any(|&(a, b)| (a..b).contains(&t_ms))
    }
}

/// A continuous recording built from one-second segments: snore segments
/// inside the planned episodes, quiet background (near-silence or soft
/// broadband noise) elsewhere.
pub fn synth_night(seed: u64, plan: &NightPlan, sample_rate: u32) -> AudioClip {
    let seg = ms_to_samples(SYNTH_CLIP_MS, sample_rate);
    let total = ms_to_samples(plan.duration_ms, sample_rate);
    let mut samples = Vec::with_capacity(total);
    let mut index = 0u64;
    while samples.len() < total {
        let t_ms = index * SYNTH_CLIP_MS;
        let mut rng = clip_rng(seed ^ 0x006e_6967_6874, index);
        let segment = if plan.is_snoring_at(t_ms) {
            snore(&mut rng, seg, sample_rate)
        } else if index % 3 == 2 {
            let std = rng.random_range(0.01..0.05);
            white(&mut rng, seg, std)
        } else {
            non_snore(SynthKind::Silence, &mut rng, seg, sample_rate)
        };
        let take = seg.min(total - samples.len());
        samples.extend(segment.into_iter().take(take).map(|s| s.clamp(-1.0, 1.0) as f32));
        index += 1;
    }
    AudioClip::new(samples, sample_rate).expect("clamped samples")
}
