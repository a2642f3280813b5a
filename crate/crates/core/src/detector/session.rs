use std::io::{Read, Write};
use std::thread;

use serde::{Deserialize, Serialize};

use super::{Detector, DetectorError, LoggedMessage};
use crate::audio::{double_buffer, AudioClip, FrameWindow};
use crate::nn::Classify;
use crate::SnoreClass;

/// One row per analysed window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t_ms: u64,
    pub p_snore: f64,
    pub raw_class: SnoreClass,
    pub smoothed_class: SnoreClass,
    pub alert_active: bool,
    pub pwm_freq_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionReport {
    pub log: Vec<LoggedMessage>,
    pub trace: Vec<TraceRow>,
    pub duration_ms: u64,
    pub episodes: u32,
    pub mean_latency_ms: f64,
}

impl SessionReport {
    pub fn alert_activations(&self) -> usize {
        self.trace.windows(2).filter(|w| !w[0].alert_active && w[1].alert_active).count()
            + usize::from(self.trace.first().is_some_and(|r| r.alert_active))
    }

    /// Total smoothed snoring time; see [`snore_intervals`].
    pub fn snore_ms(&self) -> u64 {
        snore_intervals(&self.trace, self.duration_ms).iter().map(|(a, b)| b - a).sum()
    }
}

/// Snoring intervals implied by the smoothed classes: from the start of the
/// window where snoring begins to the start of the window where it ends. An
/// episode still open after the last window closes at `end_ms`.
pub fn snore_intervals(trace: &[TraceRow], end_ms: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut open: Option<u64> = None;
    for row in trace {
        match (open, row.smoothed_class.is_snoring()) {
            (None, true) => open = Some(row.t_ms),
            (Some(start), false) => {
                out.push((start, row.t_ms));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        out.push((start, end_ms.max(start)));
    }
    out
}

/// Observer for a running session, called on the inference thread.
pub trait SessionSink {
    /// Each bank of captured audio, in stream order, before any window that uses it.
    fn audio(&mut self, _samples: &[f32]) -> Result<(), DetectorError> {
        Ok(())
    }

    fn window(&mut self, _row: &TraceRow, _messages: &[LoggedMessage]) -> Result<(), DetectorError> {
        Ok(())
    }
}

struct NoSink;

impl SessionSink for NoSink {}

pub fn run_session<M: Classify>(clip: &AudioClip, detector: &mut Detector<M>) -> Result<SessionReport, DetectorError> {
    run_session_with(clip, detector, &mut NoSink)
}

/// Streams `clip` through a capture thread and the double buffer into the
/// detector, one hop-sized bank at a time.
pub fn run_session_with<M: Classify>(
    clip: &AudioClip,
    detector: &mut Detector<M>,
    sink: &mut dyn SessionSink,
) -> Result<SessionReport, DetectorError> {
    let rate = detector.extractor().sample_rate();
    let resampled;
    let clip = if clip.sample_rate() == rate {
        clip
    } else {
        resampled = clip.resample(rate)?;
        &resampled
    };
    let cfg = detector.config().clone();
    let win = (cfg.window_len_ms * rate as u64 / 1000) as usize;
    let hop = (cfg.hop_ms * rate as u64 / 1000) as usize;
    if hop == 0 || win == 0 {
        return Err(DetectorError::Config("window or hop shorter than one sample".into()));
    }

    let (mut writer, reader) = double_buffer(hop);
    let samples = clip.samples();
    thread::scope(|scope| {
        scope.spawn(move || {
            writer.write(samples);
            writer.close();
        });
        // Owned here so an early error drops it and releases the capture thread.
        let mut reader = reader;

        let mut trace = Vec::new();
        let mut log = Vec::new();
        let mut latency = 0.0;
        // `buf` holds stream samples from `buf_start` on.
        let mut buf: Vec<f32> = Vec::with_capacity(win + hop);
        let mut buf_start = 0usize;
        let mut k = 0usize;
        let mut closed = false;
        loop {
            while buf_start + buf.len() >= k * hop + win {
                let from = k * hop - buf_start;
                let window = FrameWindow {
                    samples: buf[from..from + win].to_vec(),
                    sample_rate: rate,
                    start_ms: k as u64 * cfg.hop_ms,
                };
                let out = detector.step(&window)?;
                latency += out.prediction.latency_ms;
                let row = TraceRow {
                    t_ms: window.start_ms,
                    p_snore: out.prediction.p_snore,
                    raw_class: out.raw_class,
                    smoothed_class: out.smoothed_class,
                    alert_active: out.alert.active,
                    pwm_freq_hz: out.alert.pwm_freq_hz,
                };
                sink.window(&row, &out.messages)?;
                trace.push(row);
                log.extend(out.messages);
                k += 1;
                let keep_from = (k * hop).saturating_sub(buf_start).min(buf.len());
                buf.drain(..keep_from);
                buf_start += keep_from;
            }
            if closed {
                break;
            }
            let bank = match reader.recv() {
                Some(bank) => bank,
                None => {
                    closed = true;
                    reader.remainder()
                }
            };
            sink.audio(&bank)?;
            buf.extend_from_slice(&bank);
            if !closed {
                reader.recycle(bank);
            }
        }
        let n = trace.len();
        Ok(SessionReport {
            log,
            trace,
            duration_ms: clip.duration_ms(),
            episodes: detector.episodes(),
            mean_latency_ms: if n == 0 { 0.0 } else { latency / n as f64 },
        })
    })
}

pub fn write_trace_csv<W: Write>(trace: &[TraceRow], out: W) -> Result<(), DetectorError> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace {
        w.serialize(row).map_err(|e| DetectorError::Trace(e.to_string()))?;
    }
    w.flush().map_err(|e| DetectorError::Trace(e.to_string()))
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>, DetectorError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<Vec<TraceRow>, _>>()
        .map_err(|e| DetectorError::Trace(e.to_string()))
}
