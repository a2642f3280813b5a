use std::thread;

use chrono::{DateTime, Utc};
use kw_core::api::{AudioReceipt, CreateSession, EndSession, EventBatch};
use kw_core::event::GatewayEvent;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::api::{ApiError, IngestApi};
use crate::backoff::{Backoff, BackoffConfig};
use crate::clip::EpisodeClip;
use crate::spool::Spool;

pub const DEFAULT_BATCH_SIZE: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadConfig {
    pub batch_size: usize,
    pub backoff: BackoffConfig,
    /// Attempts per request before giving up; the events stay spooled.
    pub max_attempts: u32,
}

impl Default for UploadConfig {
    fn default() -> Self {
        Self { batch_size: DEFAULT_BATCH_SIZE, backoff: BackoffConfig::default(), max_attempts: 16 }
    }
}

#[derive(Debug, Error)]
pub enum UploadError {
    #[error("batch seq {first_seq}..={last_seq} rejected and quarantined: {error}")]
    Quarantined { first_seq: u64, last_seq: u64, error: ApiError },
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: ApiError },
    #[error("request rejected: {0}")]
    Rejected(ApiError),
    #[error("spool: {0}")]
    Spool(#[from] std::io::Error),
    #[error("invalid upload configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Receipt {
    pub first_seq: u64,
    pub last_seq: u64,
    pub events: usize,
    pub accepted: u64,
    pub duplicates: u64,
    pub attempts: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UploadStats {
    pub requests: u64,
    pub retries: u64,
    pub batches: u64,
    pub events_sent: u64,
    pub accepted: u64,
    pub duplicates: u64,
    pub quarantined_batches: u64,
    pub quarantined_events: u64,
    pub failed_batches: u64,
    pub clips_uploaded: u64,
    pub clips_failed: u64,
    pub total_backoff_ms: u64,
}

/// Runs `op` until it succeeds, fails permanently, or runs out of attempts.
fn with_retry<T>(
    backoff: &mut Backoff,
    max_attempts: u32,
    stats: &mut UploadStats,
    mut op: impl FnMut() -> Result<T, ApiError>,
) -> (Result<T, ApiError>, u32) {
    let mut attempt = 0;
    loop {
        stats.requests += 1;
        attempt += 1;
        match op() {
            Ok(v) => return (Ok(v), attempt),
            Err(e) if e.is_retryable() && attempt < max_attempts.max(1) => {
                let d = backoff.delay(attempt - 1);
                log::debug!("retry {attempt} in {d:?}: {e}");
                stats.retries += 1;
                stats.total_backoff_ms += d.as_millis() as u64;
                thread::sleep(d);
            }
            Err(e) => return (Err(e), attempt),
        }
    }
}

/// Opens a session, retrying transient failures under a single
/// idempotency key so a retried create cannot open a second session.
pub fn open_session<A: IngestApi>(api: &A, req: &CreateSession, cfg: &UploadConfig) -> Result<String, UploadError> {
    let key = uuid::Uuid::new_v4().to_string();
    let mut backoff = Backoff::new(cfg.backoff.clone());
    let mut stats = UploadStats::default();
    match with_retry(&mut backoff, cfg.max_attempts, &mut stats, || api.create_session(req, &key)) {
        (Ok(created), _) => Ok(created.session_id),
        (Err(e), attempts) if e.is_retryable() => Err(UploadError::Exhausted { attempts, last: e }),
        (Err(e), _) => Err(UploadError::Rejected(e)),
    }
}

/// Uploads one session's events and clips.
pub struct Uploader<A: IngestApi> {
    api: A,
    session_id: String,
    cfg: UploadConfig,
    spool: Option<Spool>,
    backoff: Backoff,
    stats: UploadStats,
    /// Rejected events when running without a spool.
    quarantined: Vec<GatewayEvent>,
}

impl<A: IngestApi> Uploader<A> {
    pub fn new(
        api: A,
        session_id: impl Into<String>,
        cfg: UploadConfig,
        spool: Option<Spool>,
    ) -> Result<Self, UploadError> {
        if cfg.batch_size == 0 {
            return Err(UploadError::Config("batch size must be at least 1".into()));
        }
        Ok(Self {
            backoff: Backoff::new(cfg.backoff.clone()),
            api,
            session_id: session_id.into(),
            cfg,
            spool,
            stats: UploadStats::default(),
            quarantined: Vec::new(),
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn stats(&self) -> &UploadStats {
        &self.stats
    }

    pub fn spool(&self) -> Option<&Spool> {
        self.spool.as_ref()
    }

    pub fn spool_mut(&mut self) -> Option<&mut Spool> {
        self.spool.as_mut()
    }

    pub fn quarantined(&self) -> &[GatewayEvent] {
        &self.quarantined
    }

    pub fn config(&self) -> &UploadConfig {
        &self.cfg
    }

    /// Posts `events` in order, in batches of at most the configured size.
    /// Later batches are still attempted after a failed one.
    pub fn batch_upload(&mut self, events: &[GatewayEvent]) -> Vec<Result<Receipt, UploadError>> {
        events.chunks(self.cfg.batch_size).map(|chunk| self.upload_batch(chunk)).collect()
    }

    /// Sends every spooled event the server has not acknowledged.
    pub fn replay(&mut self) -> Vec<Result<Receipt, UploadError>> {
        let left = self.spool.as_ref().map(Spool::unacked).unwrap_or_default();
        self.batch_upload(&left)
    }

    /// One request of at most one batch, spooled before it is sent.
    pub fn upload_batch(&mut self, events: &[GatewayEvent]) -> Result<Receipt, UploadError> {
        assert!(!events.is_empty() && events.len() <= self.cfg.batch_size, "batch of {} events", events.len());
        if let Some(spool) = self.spool.as_mut() {
            spool.append_pending(events)?;
        }
        let first_seq = events[0].seq;
        let last_seq = events[events.len() - 1].seq;
        let batch = EventBatch { events: events.to_vec() };
        self.stats.batches += 1;
        self.stats.events_sent += events.len() as u64;
        let (api, session) = (&self.api, self.session_id.as_str());
        let (result, attempts) =
            with_retry(&mut self.backoff, self.cfg.max_attempts, &mut self.stats, || api.post_events(session, &batch));
        match result {
            Ok(r) => {
                if let Some(spool) = self.spool.as_mut() {
                    spool.mark_acked(events)?;
                }
                self.stats.accepted += r.accepted;
                self.stats.duplicates += r.duplicates;
                Ok(Receipt {
                    first_seq,
                    last_seq,
                    events: events.len(),
                    accepted: r.accepted,
                    duplicates: r.duplicates,
                    attempts,
                })
            }
            Err(error) if !error.is_retryable() => {
                log::warn!("batch {first_seq}..={last_seq} quarantined: {error}");
                match self.spool.as_mut() {
                    Some(spool) => spool.quarantine(events, &error.to_string())?,
                    None => self.quarantined.extend_from_slice(events),
                }
                self.stats.quarantined_batches += 1;
                self.stats.quarantined_events += events.len() as u64;
                Err(UploadError::Quarantined { first_seq, last_seq, error })
            }
            Err(last) => {
                self.stats.failed_batches += 1;
                Err(UploadError::Exhausted { attempts, last })
            }
        }
    }

    pub fn upload_clip(&mut self, clip: &EpisodeClip) -> Result<AudioReceipt, UploadError> {
        let wav = kw_core::audio::encode_wav(&clip.audio);
        let key = format!("{}-audio-{}-{}", self.session_id, clip.clip_start_ms, clip.clip_end_ms);
        let (api, session) = (&self.api, self.session_id.as_str());
        let (result, attempts) = with_retry(&mut self.backoff, self.cfg.max_attempts, &mut self.stats, || {
            api.post_audio(session, clip.clip_start_ms, clip.clip_end_ms, &wav, &key)
        });
        match result {
            Ok(r) => {
                self.stats.clips_uploaded += 1;
                Ok(r)
            }
            Err(e) => {
                self.stats.clips_failed += 1;
                Err(if e.is_retryable() {
                    UploadError::Exhausted { attempts, last: e }
                } else {
                    UploadError::Rejected(e)
                })
            }
        }
    }

    /// Closes the session. A 409 on a retry means an earlier attempt
    /// already closed it.
    pub fn end_session(&mut self, ended_at: Option<DateTime<Utc>>) -> Result<(), UploadError> {
        let req = EndSession { ended_at };
        let (api, session) = (&self.api, self.session_id.as_str());
        let mut tries = 0;
        let (result, attempts) = with_retry(&mut self.backoff, self.cfg.max_attempts, &mut self.stats, || {
            tries += 1;
            match api.end_session(session, &req) {
                Err(ApiError::Status { status: 409, .. }) if tries > 1 => Ok(()),
                other => other,
            }
        });
        match result {
            Ok(()) => {
                if let Some(spool) = self.spool.as_mut() {
                    spool.mark_ended()?;
                }
                Ok(())
            }
            Err(e) if e.is_retryable() => Err(UploadError::Exhausted { attempts, last: e }),
            Err(e) => Err(UploadError::Rejected(e)),
        }
    }
}
