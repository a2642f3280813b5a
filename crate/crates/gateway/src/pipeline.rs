//! Device, link, gateway and uploader wired together for one session.
//!
//! Three threads: the device runs the detector on the caller's thread and
//! publishes over the link; the receiver relays link messages into events,
//! keeps the audio ring and cuts episode clips; the uploader drains a
//! bounded queue into the ingest API.

use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use chrono::{DateTime, Utc};
use crossbeam_channel::{Receiver, Sender};
use kw_core::api::CreateSession;
use kw_core::audio::{AudioClip, RecentAudioRing};
use kw_core::detector::{
    run_session_with, Detector, DetectorError, LoggedMessage, SessionReport, SessionSink, TraceRow,
};
use kw_core::event::{EventPayload, GatewayEvent};
use kw_core::nn::Classify;
use kw_core::pam::{link, Central, CentralStats, FaultConfig, PamError, Peripheral, PeripheralStats};
use serde::Serialize;
use thiserror::Error;

use crate::api::IngestApi;
use crate::clip::{clip_episode, ClipError, EpisodeClip, EpisodeTracker, EPISODE_PAD_MS, RING_RETENTION_MS};
use crate::relay::Relay;
use crate::spool::{Spool, SpoolSession};
use crate::upload::{open_session, UploadConfig, UploadError, UploadStats, Uploader};

/// Receiver-to-uploader queue bound; a full queue blocks the receiver.
pub const QUEUE_CAPACITY: usize = 10_000;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub device_id: String,
    pub started_at: DateTime<Utc>,
    pub faults: FaultConfig,
    pub upload: UploadConfig,
    pub queue_capacity: usize,
    pub ring_retention_ms: u64,
    pub pad_ms: u64,
    /// Per-session spool directories are created under this root.
    pub spool_root: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn new(device_id: impl Into<String>, started_at: DateTime<Utc>) -> Self {
        Self {
            device_id: device_id.into(),
            started_at,
            faults: FaultConfig::none(),
            upload: UploadConfig::default(),
            queue_capacity: QUEUE_CAPACITY,
            ring_retention_ms: RING_RETENTION_MS,
            pad_ms: EPISODE_PAD_MS,
            spool_root: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Upload(#[from] UploadError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Link(#[from] PamError),
    #[error("spool: {0}")]
    Spool(#[from] std::io::Error),
    #[error("{0} thread panicked")]
    Panic(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipRecord {
    pub episode_start_ms: u64,
    pub episode_end_ms: u64,
    pub clip_start_ms: Option<u64>,
    pub clip_end_ms: Option<u64>,
    pub audio_id: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub session_id: String,
    pub detector: SessionReport,
    /// Every event the gateway produced, in emission order.
    pub emitted: Vec<GatewayEvent>,
    pub peripheral: PeripheralStats,
    pub central: CentralStats,
    pub undelivered_indications: u64,
    pub upload: UploadStats,
    pub clips: Vec<ClipRecord>,
    pub failures: Vec<String>,
    pub ended: bool,
}

impl PipelineReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty() && self.ended
    }
}

struct DeviceSink {
    peripheral: Peripheral,
    audio: Sender<Vec<f32>>,
    undelivered: u64,
}

impl SessionSink for DeviceSink {
    fn audio(&mut self, samples: &[f32]) -> Result<(), DetectorError> {
        // A vanished receiver shows up as a closed link on the next send.
        let _ = self.audio.send(samples.to_vec());
        Ok(())
    }

    fn window(&mut self, _row: &TraceRow, messages: &[LoggedMessage]) -> Result<(), DetectorError> {
        for m in messages {
            match self.peripheral.send(&m.message) {
                Ok(_) => {}
                Err(PamError::Undelivered { seq, attempts }) => {
                    log::warn!("indication {seq} undelivered after {attempts} attempts");
                    self.undelivered += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }
}

enum Work {
    Event(GatewayEvent),
    Clip { episode: (u64, u64), clip: Result<EpisodeClip, ClipError> },
}

struct Receiving {
    emitted: Vec<GatewayEvent>,
    central: CentralStats,
}

fn receive(
    mut central: Central,
    audio: Receiver<Vec<f32>>,
    mut ring: RecentAudioRing,
    mut relay: Relay,
    pad_ms: u64,
    out: Sender<Work>,
) -> Receiving {
    let mut tracker = EpisodeTracker::new();
    let mut waiting: Vec<(u64, u64)> = Vec::new();
    let mut emitted = Vec::new();
    let drain = |ring: &mut RecentAudioRing| {
        while let Ok(chunk) = audio.try_recv() {
            ring.write(&chunk);
        }
    };
    let cut = |ring: &RecentAudioRing, waiting: &mut Vec<(u64, u64)>, all: bool| {
        let now = ring.now_ms();
        waiting.retain(|&(s, e)| {
            if all || now >= e + pad_ms {
                let _ = out.send(Work::Clip { episode: (s, e), clip: clip_episode(ring, s, e, pad_ms) });
                false
            } else {
                true
            }
        });
    };
    loop {
        match central.recv_timeout(Duration::from_millis(20)) {
            Ok(Some(received)) => {
                drain(&mut ring);
                let event = relay.map(&received.message);
                if let EventPayload::ActivitySummary(s) = event.payload {
                    waiting.extend(tracker.on_summary(s.window_start_ms, s.class));
                }
                let _ = out.send(Work::Event(event.clone()));
                emitted.push(event);
            }
            Ok(None) => drain(&mut ring),
            Err(()) => break,
        }
        cut(&ring, &mut waiting, false);
    }
    for chunk in audio.iter() {
        ring.write(&chunk);
    }
    waiting.extend(tracker.finish(ring.now_ms()));
    cut(&ring, &mut waiting, true);
    Receiving { emitted, central: central.stats() }
}

struct Uploading {
    stats: UploadStats,
    clips: Vec<ClipRecord>,
    failures: Vec<String>,
    ended: bool,
}

fn upload<A: IngestApi>(mut up: Uploader<A>, rx: Receiver<Work>, ended_at: DateTime<Utc>) -> Uploading {
    let batch_size = up.config().batch_size;
    let mut buf: Vec<GatewayEvent> = Vec::with_capacity(batch_size);
    let mut clips = Vec::new();
    let mut failures = Vec::new();
    let flush = |up: &mut Uploader<A>, buf: &mut Vec<GatewayEvent>, failures: &mut Vec<String>| {
        if !buf.is_empty() {
            failures.extend(up.batch_upload(buf).into_iter().filter_map(|r| r.err().map(|e| e.to_string())));
            buf.clear();
        }
    };
    for work in rx.iter() {
        match work {
            Work::Event(e) => {
                buf.push(e);
                if buf.len() >= batch_size {
                    flush(&mut up, &mut buf, &mut failures);
                }
            }
            Work::Clip { episode, clip } => {
                flush(&mut up, &mut buf, &mut failures);
                let mut record = ClipRecord {
                    episode_start_ms: episode.0,
                    episode_end_ms: episode.1,
                    clip_start_ms: None,
                    clip_end_ms: None,
                    audio_id: None,
                    error: None,
                };
                match clip {
                    Ok(c) => {
                        record.clip_start_ms = Some(c.clip_start_ms);
                        record.clip_end_ms = Some(c.clip_end_ms);
                        match up.upload_clip(&c) {
                            Ok(r) => record.audio_id = Some(r.audio_id),
                            Err(e) => {
                                failures.push(e.to_string());
                                record.error = Some(e.to_string());
                            }
                        }
                    }
                    // The episode's events are still uploaded, just without audio.
                    Err(e) => record.error = Some(e.to_string()),
                }
                clips.push(record);
            }
        }
        if rx.is_empty() {
            flush(&mut up, &mut buf, &mut failures);
        }
    }
    flush(&mut up, &mut buf, &mut failures);
    let ended = if failures.is_empty() {
        match up.end_session(Some(ended_at)) {
            Ok(()) => true,
            Err(e) => {
                failures.push(e.to_string());
                false
            }
        }
    } else {
        // Leave the session open so a spool replay can finish it.
        false
    };
    Uploading { stats: up.stats().clone(), clips, failures, ended }
}

/// Runs one full session: opens it on the server, streams `clip` through
/// the detector and the link, uploads everything and closes the session.
pub fn run_pipeline<M: Classify, A: IngestApi>(
    clip: &AudioClip,
    detector: &mut Detector<M>,
    api: A,
    cfg: &PipelineConfig,
) -> Result<PipelineReport, GatewayError> {
    let started_at = cfg.started_at;
    let origin_ms = started_at.timestamp_millis().max(0) as u64;
    let ended_at = started_at + chrono::Duration::milliseconds(clip.duration_ms() as i64);
    let req = CreateSession { device_id: cfg.device_id.clone(), started_at };
    let session_id = open_session(&api, &req, &cfg.upload)?;
    log::info!("session {session_id} opened");

    let spool = match &cfg.spool_root {
        Some(root) => {
            let session = SpoolSession {
                session_id: session_id.clone(),
                device_id: cfg.device_id.clone(),
                started_at,
                ended_at: None,
            };
            let mut spool = Spool::create(root.join(&session_id), session)?;
            spool.set_ended_at(ended_at)?;
            Some(spool)
        }
        None => None,
    };
    let uploader = Uploader::new(api, session_id.clone(), cfg.upload.clone(), spool)?;

    let (peripheral, central) = link(cfg.faults)?;
    let (audio_tx, audio_rx) = crossbeam_channel::unbounded();
    let (work_tx, work_rx) = crossbeam_channel::bounded(cfg.queue_capacity.max(1));
    let ring = RecentAudioRing::new(cfg.ring_retention_ms, detector.extractor().sample_rate());
    let relay = Relay::new(cfg.device_id.clone(), origin_ms, 0);
    let pad_ms = cfg.pad_ms;

    let (device, receiving, uploading) = thread::scope(|scope| {
        let receiver = scope.spawn(move || receive(central, audio_rx, ring, relay, pad_ms, work_tx));
        let uploader = scope.spawn(move || upload(uploader, work_rx, ended_at));
        let mut sink = DeviceSink { peripheral, audio: audio_tx, undelivered: 0 };
        let device =
            run_session_with(clip, detector, &mut sink).map(|r| (r, sink.peripheral.stats(), sink.undelivered));
        // Closing the link lets the receiver, then the uploader, finish.
        drop(sink);
        (device, receiver.join(), uploader.join())
    });
    let (detector_report, peripheral, undelivered) = device?;
    let receiving = receiving.map_err(|_| GatewayError::Panic("receiver"))?;
    let uploading = uploading.map_err(|_| GatewayError::Panic("uploader"))?;

    Ok(PipelineReport {
        session_id,
        detector: detector_report,
        emitted: receiving.emitted,
        peripheral,
        central: receiving.central,
        undelivered_indications: undelivered,
        upload: uploading.stats,
        clips: uploading.clips,
        failures: uploading.failures,
        ended: uploading.ended,
    })
}
