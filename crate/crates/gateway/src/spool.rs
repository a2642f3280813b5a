//! Crash-safe record of what the gateway has emitted and what the server
//! has acknowledged.
//!
//! One directory per session:
//!
//! * `session.json`: the session being uploaded,
//! * `pending.jsonl`: every event handed to the uploader, one per line,
//! * `acked.jsonl`: `{"from":a,"to":b}` seq ranges the server has accepted,
//! * `quarantine.jsonl`: events the server rejected, with the reason,
//! * `ended`: present once the session was closed on the server.
//!
//! Every append is fsynced before the call returns. A torn final line left
//! by a crash is ignored on reopen.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use kw_core::event::GatewayEvent;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpoolSession {
    pub session_id: String,
    pub device_id: String,
    pub started_at: DateTime<Utc>,
    /// Set once the device stream has finished.
    #[serde(default)]
    pub ended_at: Option<DateTime<Utc>>,
}

#[derive(Serialize, Deserialize)]
struct AckRange {
    from: u64,
    to: u64,
}

#[derive(Serialize, Deserialize)]
struct QuarantineLine {
    reason: String,
    event: GatewayEvent,
}

#[derive(Debug)]
pub struct Spool {
    dir: PathBuf,
    session: SpoolSession,
    pending: BTreeMap<u64, GatewayEvent>,
    acked: BTreeSet<u64>,
    quarantined: BTreeSet<u64>,
    pending_file: File,
    acked_file: File,
    quarantine_file: File,
}

fn append_file(path: &Path) -> io::Result<File> {
    OpenOptions::new().create(true).append(true).open(path)
}

/// Complete lines of a JSONL file; an unterminated last line is dropped.
fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> io::Result<Vec<T>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut out = Vec::new();
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 || !line.ends_with('\n') {
            break;
        }
        let value = serde_json::from_str(line.trim_end())
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
        out.push(value);
    }
    Ok(out)
}

fn write_lines<T: Serialize>(file: &mut File, items: impl IntoIterator<Item = T>) -> io::Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, &item)?;
        buf.push(b'\n');
    }
    file.write_all(&buf)?;
    file.sync_data()
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}

/// Consecutive runs of a sorted seq list.
fn runs(seqs: &[u64]) -> Vec<AckRange> {
    let mut out: Vec<AckRange> = Vec::new();
    for &s in seqs {
        match out.last_mut() {
            Some(r) if r.to + 1 == s => r.to = s,
            _ => out.push(AckRange { from: s, to: s }),
        }
    }
    out
}

impl Spool {
    pub fn create(dir: impl AsRef<Path>, session: SpoolSession) -> io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut spool = Self::open_files(&dir, session)?;
        spool.write_session()?;
        Ok(spool)
    }

    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let text = fs::read_to_string(dir.join("session.json"))?;
        let session: SpoolSession =
            serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let mut spool = Self::open_files(&dir, session)?;
        for ev in read_lines::<GatewayEvent>(&dir.join("pending.jsonl"))? {
            spool.pending.insert(ev.seq, ev);
        }
        for r in read_lines::<AckRange>(&dir.join("acked.jsonl"))? {
            spool.acked.extend(r.from..=r.to);
        }
        for q in read_lines::<QuarantineLine>(&dir.join("quarantine.jsonl"))? {
            spool.quarantined.insert(q.event.seq);
        }
        Ok(spool)
    }

    /// Session directories under `root` that have a spool.
    pub fn list(root: impl AsRef<Path>) -> io::Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(root)? {
            let path = entry?.path();
            if path.join("session.json").is_file() {
                out.push(path);
            }
        }
        out.sort();
        Ok(out)
    }

    fn open_files(dir: &Path, session: SpoolSession) -> io::Result<Self> {
        Ok(Self {
            pending_file: append_file(&dir.join("pending.jsonl"))?,
            acked_file: append_file(&dir.join("acked.jsonl"))?,
            quarantine_file: append_file(&dir.join("quarantine.jsonl"))?,
            dir: dir.to_path_buf(),
            session,
            pending: BTreeMap::new(),
            acked: BTreeSet::new(),
            quarantined: BTreeSet::new(),
        })
    }

    fn write_session(&mut self) -> io::Result<()> {
        let tmp = self.dir.join("session.json.tmp");
        let mut f = File::create(&tmp)?;
        serde_json::to_writer_pretty(&mut f, &self.session)?;
        f.sync_all()?;
        fs::rename(&tmp, self.dir.join("session.json"))?;
        sync_dir(&self.dir)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn session(&self) -> &SpoolSession {
        &self.session
    }

    pub fn set_ended_at(&mut self, ended_at: DateTime<Utc>) -> io::Result<()> {
        self.session.ended_at = Some(ended_at);
        self.write_session()
    }

    /// Seq after the highest event ever spooled.
    pub fn next_seq(&self) -> u64 {
        self.pending.keys().next_back().map_or(0, |s| s + 1)
    }

    pub fn append_pending(&mut self, events: &[GatewayEvent]) -> io::Result<()> {
        let fresh: Vec<&GatewayEvent> = events.iter().filter(|e| !self.pending.contains_key(&e.seq)).collect();
        if fresh.is_empty() {
            return Ok(());
        }
        write_lines(&mut self.pending_file, &fresh)?;
        for ev in fresh {
            self.pending.insert(ev.seq, ev.clone());
        }
        Ok(())
    }

    pub fn mark_acked(&mut self, events: &[GatewayEvent]) -> io::Result<()> {
        let mut seqs: Vec<u64> = events.iter().map(|e| e.seq).filter(|s| !self.acked.contains(s)).collect();
        seqs.sort_unstable();
        seqs.dedup();
        if seqs.is_empty() {
            return Ok(());
        }
        write_lines(&mut self.acked_file, runs(&seqs))?;
        self.acked.extend(seqs);
        Ok(())
    }

    pub fn quarantine(&mut self, events: &[GatewayEvent], reason: &str) -> io::Result<()> {
        let fresh: Vec<QuarantineLine> = events
            .iter()
            .filter(|e| !self.quarantined.contains(&e.seq))
            .map(|e| QuarantineLine { reason: reason.to_string(), event: e.clone() })
            .collect();
        if fresh.is_empty() {
            return Ok(());
        }
        write_lines(&mut self.quarantine_file, &fresh)?;
        self.quarantined.extend(fresh.iter().map(|q| q.event.seq));
        Ok(())
    }

    /// Spooled events the server has not acknowledged, quarantined ones
    /// included, in seq order.
    pub fn unacked(&self) -> Vec<GatewayEvent> {
        self.pending.values().filter(|e| !self.acked.contains(&e.seq)).cloned().collect()
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn acked_count(&self) -> usize {
        self.acked.len()
    }

    pub fn quarantined_seqs(&self) -> Vec<u64> {
        self.quarantined.iter().copied().filter(|s| !self.acked.contains(s)).collect()
    }

    pub fn is_ended(&self) -> bool {
        self.dir.join("ended").exists()
    }

    pub fn mark_ended(&mut self) -> io::Result<()> {
        File::create(self.dir.join("ended"))?.sync_all()?;
        sync_dir(&self.dir)
    }
}
