//! On-disk persistence: one JSONL log per session plus an index file.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::event::Event;
use super::flow::FlowKind;
use super::SessionError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub session_id: String,
    pub user_id: String,
    pub flow: FlowKind,
    pub created_ms: u64,
    pub completed: bool,
    pub event_count: usize,
}

#[derive(Debug, Clone)]
pub struct EventStore {
    root: PathBuf,
}

fn io(e: impl std::fmt::Display) -> SessionError {
    SessionError::Storage(e.to_string())
}

impl EventStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let root = root.into();
        fs::create_dir_all(root.join("sessions")).map_err(io)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn log_path(&self, session_id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{session_id}.jsonl"))
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    /// Appends events to a session's log, one JSON object per line.
    pub fn append(&self, session_id: &str, events: &[Event]) -> Result<(), SessionError> {
        if events.is_empty() {
            return Ok(());
        }
        let mut f = OpenOptions::new().create(true).append(true).open(self.log_path(session_id)).map_err(io)?;
        let mut buf = String::new();
        for e in events {
            buf.push_str(&serde_json::to_string(e).map_err(io)?);
            buf.push('\n');
        }
        f.write_all(buf.as_bytes()).map_err(io)?;
        f.sync_data().map_err(io)
    }

    pub fn load(&self, session_id: &str) -> Result<Vec<Event>, SessionError> {
        let path = self.log_path(session_id);
        let f = File::open(&path).map_err(|_| SessionError::NotFound(session_id.into()))?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let e: Event = serde_json::from_str(&line)
                .map_err(|err| SessionError::Storage(format!("{}:{}: {err}", path.display(), i + 1)))?;
            if e.seq != out.len() as u64 {
                return Err(SessionError::Storage(format!("{}: sequence gap at line {}", path.display(), i + 1)));
            }
            out.push(e);
        }
        Ok(out)
    }

    pub fn read_index(&self) -> Result<BTreeMap<String, IndexEntry>, SessionError> {
        match fs::read_to_string(self.index_path()) {
            Ok(s) => serde_json::from_str(&s).map_err(io),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeMap::new()),
            Err(e) => Err(io(e)),
        }
    }

    /// Replaces the index via write-then-rename.
    pub fn write_index(&self, index: &BTreeMap<String, IndexEntry>) -> Result<(), SessionError> {
        let tmp = self.root.join("index.json.tmp");
        let body = serde_json::to_string_pretty(index).map_err(io)?;
        let mut f = File::create(&tmp).map_err(io)?;
        f.write_all(body.as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, self.index_path()).map_err(io)
    }

    pub fn upsert(&self, entry: IndexEntry) -> Result<(), SessionError> {
        let mut index = self.read_index()?;
        index.insert(entry.session_id.clone(), entry);
        self.write_index(&index)
    }
}
