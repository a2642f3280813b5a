//! Append-only session store.
//!
//! ```text
//! <data-dir>/sessions.jsonl        session created / ended records
//! <data-dir>/events/<id>.jsonl     one accepted event per line
//! <data-dir>/audio.jsonl           audio segment index
//! <data-dir>/audio/<audio_id>.wav  segment bytes as uploaded
//! ```
//!
//! Every write is fsynced before the call returns, so anything a client saw
//! acknowledged survives a crash. On open the logs are replayed into memory;
//! a torn final line is cut off.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use kw_core::api::{AudioSegment, IngestReceipt, SessionStatus, SleepSession};
use kw_core::event::GatewayEvent;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown audio segment {0}")]
    UnknownAudio(String),
    #[error("session {0} is closed")]
    Closed(String),
    #[error("event seq {seq} already stored with a different body")]
    Conflict { seq: u64 },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("storage: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt store file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum SessionRecord {
    Created {
        session: SleepSession,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        idempotency_key: Option<String>,
    },
    Ended {
        session_id: String,
        ended_at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AudioRecord {
    segment: AudioSegment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    idempotency_key: Option<String>,
}

/// Reads a JSON Lines log and reopens it for appending, cutting off any
/// unterminated last line first.
fn open_log<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(Vec<T>, File), StoreError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let mut items = Vec::new();
    for (n, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let item = serde_json::from_slice(line)
            .map_err(|e| StoreError::Corrupt { path: path.to_path_buf(), reason: format!("line {}: {e}", n + 1) })?;
        items.push(item);
    }
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    if complete < bytes.len() {
        log::warn!("{}: dropping {} bytes of torn tail", path.display(), bytes.len() - complete);
        file.set_len(complete as u64)?;
        file.sync_data()?;
    }
    Ok((items, file))
}

fn append<T: Serialize>(file: &mut File, items: &[T]) -> io::Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    file.write_all(&buf)?;
    file.sync_data()
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}

struct SessionState {
    meta: SleepSession,
    events: BTreeMap<u64, GatewayEvent>,
    file: File,
}

struct SessionEntry {
    /// Serializes all writes to one session.
    state: Mutex<SessionState>,
    /// What readers see; replaced after each committed write.
    snapshot: RwLock<Snapshot>,
}

#[derive(Clone)]
pub struct Snapshot {
    pub session: SleepSession,
    pub events: Arc<Vec<GatewayEvent>>,
}

pub struct Store {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<SessionEntry>>>,
    session_keys: Mutex<HashMap<String, String>>,
    session_log: Mutex<File>,
    audio: RwLock<HashMap<String, AudioSegment>>,
    audio_keys: Mutex<HashMap<String, String>>,
    audio_log: Mutex<File>,
}

impl Store {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("events"))?;
        fs::create_dir_all(dir.join("audio"))?;

        let (records, session_log) = open_log::<SessionRecord>(&dir.join("sessions.jsonl"))?;
        let mut metas: BTreeMap<String, SleepSession> = BTreeMap::new();
        let mut session_keys = HashMap::new();
        for r in records {
            match r {
                SessionRecord::Created { session, idempotency_key } => {
                    if let Some(k) = idempotency_key {
                        session_keys.insert(k, session.session_id.clone());
                    }
                    metas.insert(session.session_id.clone(), session);
                }
                SessionRecord::Ended { session_id, ended_at } => {
                    if let Some(m) = metas.get_mut(&session_id) {
                        m.ended_at = Some(ended_at);
                        m.status = SessionStatus::Closed;
                    }
                }
            }
        }
        let mut sessions = HashMap::new();
        for (id, meta) in metas {
            let (events, file) = open_log::<GatewayEvent>(&dir.join("events").join(format!("{id}.jsonl")))?;
            let events: BTreeMap<u64, GatewayEvent> = events.into_iter().map(|e| (e.seq, e)).collect();
            sessions.insert(id, Arc::new(SessionEntry::new(SessionState { meta, events, file })));
        }

        let (records, audio_log) = open_log::<AudioRecord>(&dir.join("audio.jsonl"))?;
        let mut audio = HashMap::new();
        let mut audio_keys = HashMap::new();
        for r in records {
            if let Some(k) = r.idempotency_key {
                audio_keys.insert(k, r.segment.audio_id.clone());
            }
            audio.insert(r.segment.audio_id.clone(), r.segment);
        }

        Ok(Self {
            dir,
            sessions: RwLock::new(sessions),
            session_keys: Mutex::new(session_keys),
            session_log: Mutex::new(session_log),
            audio: RwLock::new(audio),
            audio_keys: Mutex::new(audio_keys),
            audio_log: Mutex::new(audio_log),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry(&self, id: &str) -> Result<Arc<SessionEntry>, StoreError> {
        self.sessions.read().unwrap().get(id).cloned().ok_or_else(|| StoreError::UnknownSession(id.to_string()))
    }

    /// Opens a session. A repeated idempotency key returns the session it
    /// created first, with `false`.
    pub fn create_session(
        &self,
        device_id: &str,
        started_at: DateTime<Utc>,
        idempotency_key: Option<&str>,
    ) -> Result<(SleepSession, bool), StoreError> {
        if device_id.trim().is_empty() {
            return Err(StoreError::Invalid("device_id must not be empty".into()));
        }
        let mut keys = self.session_keys.lock().unwrap();
        if let Some(existing) = idempotency_key.and_then(|k| keys.get(k)) {
            return Ok((self.session(existing)?, false));
        }
        let session = SleepSession {
            session_id: uuid::Uuid::new_v4().to_string(),
            device_id: device_id.to_string(),
            started_at,
            ended_at: None,
            status: SessionStatus::Open,
        };
        let path = self.dir.join("events").join(format!("{}.jsonl", session.session_id));
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        sync_dir(&self.dir.join("events"))?;
        let record =
            SessionRecord::Created { session: session.clone(), idempotency_key: idempotency_key.map(str::to_string) };
        append(&mut self.session_log.lock().unwrap(), &[record])?;
        if let Some(k) = idempotency_key {
            keys.insert(k.to_string(), session.session_id.clone());
        }
        let state = SessionState { meta: session.clone(), events: BTreeMap::new(), file };
        self.sessions.write().unwrap().insert(session.session_id.clone(), Arc::new(SessionEntry::new(state)));
        Ok((session, true))
    }

    pub fn session(&self, id: &str) -> Result<SleepSession, StoreError> {
        Ok(self.snapshot(id)?.session)
    }

    pub fn snapshot(&self, id: &str) -> Result<Snapshot, StoreError> {
        Ok(self.entry(id)?.snapshot.read().unwrap().clone())
    }

    pub fn sessions(&self) -> Vec<SleepSession> {
        let entries: Vec<Arc<SessionEntry>> = self.sessions.read().unwrap().values().cloned().collect();
        let mut out: Vec<SleepSession> = entries.iter().map(|e| e.snapshot.read().unwrap().session.clone()).collect();
        out.sort_by(|a, b| (a.started_at, &a.session_id).cmp(&(b.started_at, &b.session_id)));
        out
    }

    /// Stores new events; events already stored with the same body count as
    /// duplicates. The whole batch is rejected if any seq conflicts.
    pub fn ingest(&self, id: &str, events: &[GatewayEvent]) -> Result<IngestReceipt, StoreError> {
        let entry = self.entry(id)?;
        let mut state = entry.state.lock().unwrap();
        if state.meta.status == SessionStatus::Closed {
            return Err(StoreError::Closed(id.to_string()));
        }
        let mut fresh: BTreeMap<u64, &GatewayEvent> = BTreeMap::new();
        let mut duplicates = 0;
        for ev in events {
            ev.validate().map_err(|e| StoreError::Invalid(format!("event seq {}: {e}", ev.seq)))?;
            if ev.device_id != state.meta.device_id {
                return Err(StoreError::Invalid(format!(
                    "event seq {} is from device {}, session belongs to {}",
                    ev.seq, ev.device_id, state.meta.device_id
                )));
            }
            match state.events.get(&ev.seq).or_else(|| fresh.get(&ev.seq).copied()) {
                Some(stored) if stored == ev => duplicates += 1,
                Some(_) => return Err(StoreError::Conflict { seq: ev.seq }),
                None => {
                    fresh.insert(ev.seq, ev);
                }
            }
        }
        if !fresh.is_empty() {
            let batch: Vec<&GatewayEvent> = fresh.values().copied().collect();
            append(&mut state.file, &batch)?;
            for ev in batch {
                state.events.insert(ev.seq, ev.clone());
            }
            entry.publish(&state);
        }
        Ok(IngestReceipt { accepted: fresh.len() as u64, duplicates })
    }

    pub fn end_session(&self, id: &str, ended_at: Option<DateTime<Utc>>) -> Result<SleepSession, StoreError> {
        let entry = self.entry(id)?;
        let mut state = entry.state.lock().unwrap();
        if state.meta.status == SessionStatus::Closed {
            return Err(StoreError::Closed(id.to_string()));
        }
        let ended_at = ended_at.unwrap_or_else(Utc::now);
        if ended_at < state.meta.started_at {
            return Err(StoreError::Invalid("ended_at is before started_at".into()));
        }
        append(
            &mut self.session_log.lock().unwrap(),
            &[SessionRecord::Ended { session_id: id.to_string(), ended_at }],
        )?;
        state.meta.ended_at = Some(ended_at);
        state.meta.status = SessionStatus::Closed;
        entry.publish(&state);
        Ok(state.meta.clone())
    }

    fn audio_path(&self, audio_id: &str) -> PathBuf {
        self.dir.join("audio").join(format!("{audio_id}.wav"))
    }

    /// Stores a validated WAV segment for an open session.
    pub fn add_audio(
        &self,
        id: &str,
        start_ms: u64,
        end_ms: u64,
        wav: &[u8],
        idempotency_key: Option<&str>,
    ) -> Result<(AudioSegment, bool), StoreError> {
        if end_ms <= start_ms {
            return Err(StoreError::Invalid(format!("end_ms {end_ms} must be after start_ms {start_ms}")));
        }
        kw_core::audio::decode_wav(wav).map_err(|e| StoreError::Invalid(format!("not a usable WAV file: {e}")))?;
        let entry = self.entry(id)?;
        let state = entry.state.lock().unwrap();
        if state.meta.status == SessionStatus::Closed {
            return Err(StoreError::Closed(id.to_string()));
        }
        let mut keys = self.audio_keys.lock().unwrap();
        if let Some(existing) = idempotency_key.and_then(|k| keys.get(k)) {
            let seg = self.audio.read().unwrap().get(existing).cloned();
            return seg.map(|s| (s, false)).ok_or_else(|| StoreError::UnknownAudio(existing.clone()));
        }
        let segment = AudioSegment {
            audio_id: uuid::Uuid::new_v4().to_string(),
            session_id: id.to_string(),
            start_ms,
            end_ms,
            bytes: wav.len() as u64,
        };
        let mut f = File::create(self.audio_path(&segment.audio_id))?;
        f.write_all(wav)?;
        f.sync_all()?;
        sync_dir(&self.dir.join("audio"))?;
        let record = AudioRecord { segment: segment.clone(), idempotency_key: idempotency_key.map(str::to_string) };
        append(&mut self.audio_log.lock().unwrap(), &[record])?;
        if let Some(k) = idempotency_key {
            keys.insert(k.to_string(), segment.audio_id.clone());
        }
        self.audio.write().unwrap().insert(segment.audio_id.clone(), segment.clone());
        Ok((segment, true))
    }

    pub fn audio(&self, audio_id: &str) -> Result<(AudioSegment, Vec<u8>), StoreError> {
        let seg = self
            .audio
            .read()
            .unwrap()
            .get(audio_id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownAudio(audio_id.into()))?;
        let bytes = fs::read(self.audio_path(audio_id))?;
        Ok((seg, bytes))
    }

    pub fn audio_for_session(&self, id: &str) -> Vec<AudioSegment> {
        let mut out: Vec<AudioSegment> =
            self.audio.read().unwrap().values().filter(|s| s.session_id == id).cloned().collect();
        out.sort_by_key(|s| (s.start_ms, s.end_ms));
        out
    }
}

impl SessionEntry {
    fn new(state: SessionState) -> Self {
        let snapshot =
            Snapshot { session: state.meta.clone(), events: Arc::new(state.events.values().cloned().collect()) };
        Self { state: Mutex::new(state), snapshot: RwLock::new(snapshot) }
    }

    fn publish(&self, state: &SessionState) {
        let snap = Snapshot { session: state.meta.clone(), events: Arc::new(state.events.values().cloned().collect()) };
        *self.snapshot.write().unwrap() = snap;
    }
}
