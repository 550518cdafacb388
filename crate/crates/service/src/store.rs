//! Append-only event log: one JSON record per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use psm_core::session::SessionConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Created { config: SessionConfig, labels: Vec<String> },
    Answered { round: usize, answer: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Milliseconds since the Unix epoch.
    pub ts: u64,
    pub session: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("event log {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("event log {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

pub fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

pub struct EventLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl EventLog {
    /// Opens (creating if needed) the log and returns it with every intact
    /// record. A final line without its newline is a torn write and is
    /// dropped; the file is truncated back to the last complete record.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<Event>), StoreError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| StoreError::Io { path: path.clone(), source };
        let mut events = Vec::new();
        let mut intact_len = 0u64;
        if path.exists() {
            let mut reader = BufReader::new(File::open(&path).map_err(io)?);
            let mut line = String::new();
            let mut number = 0;
            loop {
                line.clear();
                let read = reader.read_line(&mut line).map_err(io)?;
                if read == 0 {
                    break;
                }
                number += 1;
                if !line.ends_with('\n') {
                    break;
                }
                let text = line.trim_end();
                if !text.is_empty() {
                    let event = serde_json::from_str(text).map_err(|e| StoreError::Corrupt {
                        path: path.clone(),
                        line: number,
                        message: e.to_string(),
                    })?;
                    events.push(event);
                }
                intact_len += read as u64;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        if file.metadata().map_err(io)?.len() > intact_len {
            file.set_len(intact_len).map_err(io)?;
        }
        Ok((Self { path, file: Mutex::new(file) }, events))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one record; `sync` forces it to disk before returning.
    pub fn append(&self, event: &Event, sync: bool) -> Result<(), StoreError> {
        let io = |source| StoreError::Io { path: self.path.clone(), source };
        let mut line = serde_json::to_string(event).expect("events serialize");
        line.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(line.as_bytes()).map_err(io)?;
        if sync {
            file.sync_data().map_err(io)?;
        }
        Ok(())
    }
}
