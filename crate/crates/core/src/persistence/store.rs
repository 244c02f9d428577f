use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use log::warn;
use serde::Serialize;
use thiserror::Error;

use super::event::{Event, EventBody};
use crate::curriculum::Curriculum;

const EVENTS_FILE: &str = "events.log";
const STUDENTS_FILE: &str = "students.json";
const CURRICULA_DIR: &str = "curricula";
const SNAPSHOTS_DIR: &str = "snapshots";
const SNAPSHOT_FILE: &str = "latest.json";
const LOCK_FILE: &str = "store.lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt event log at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("store {0} is locked by another process (remove store.lock if it is stale)")]
    Locked(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Exclusive writer lock on a store directory, released on drop.
#[derive(Debug)]
pub struct StoreLock {
    path: PathBuf,
}

impl StoreLock {
    pub fn acquire(root: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        let path = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                let _ = writeln!(file, "{}", std::process::id());
                Ok(StoreLock { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                Err(StoreError::Locked(root.to_owned()))
            }
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// On-disk layout:
///
/// ```text
/// <root>/events.log          one JSON event per line, authoritative
/// <root>/students.json       materialized student profiles
/// <root>/curricula/<id>.json registered curriculum documents
/// <root>/snapshots/latest.json  replayable cache of the full state
/// ```
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    log: File,
    last_seq: u64,
    _lock: StoreLock,
}

impl Store {
    /// Opens (or creates) a store and reads its log.
    ///
    /// A final line without its terminating newline is a torn write; it is
    /// truncated with a warning. Any other bad line fails the open.
    pub fn open(root: impl AsRef<Path>) -> Result<(Store, Vec<Event>), StoreError> {
        let root = root.as_ref().to_owned();
        let lock = StoreLock::acquire(&root)?;
        for dir in [CURRICULA_DIR, SNAPSHOTS_DIR] {
            let path = root.join(dir);
            fs::create_dir_all(&path).map_err(io_err(&path))?;
        }
        let path = root.join(EVENTS_FILE);
        let events = read_log(&path, true)?;
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let last_seq = events.last().map_or(0, |e| e.seq);
        Ok((
            Store {
                root,
                log,
                last_seq,
                _lock: lock,
            },
            events,
        ))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    /// Appends an event and syncs it to disk before returning.
    pub fn append(
        &mut self,
        timestamp: DateTime<Utc>,
        body: EventBody,
    ) -> Result<Event, StoreError> {
        body.check_schema().map_err(StoreError::SchemaViolation)?;
        let event = Event {
            seq: self.last_seq + 1,
            timestamp,
            body,
        };
        let mut line = event.to_line();
        line.push('\n');
        let path = self.root.join(EVENTS_FILE);
        self.log
            .write_all(line.as_bytes())
            .and_then(|_| self.log.sync_data())
            .map_err(io_err(&path))?;
        self.last_seq = event.seq;
        Ok(event)
    }

    pub fn write_curriculum(&self, curriculum: &Curriculum) -> Result<(), StoreError> {
        let path = self
            .root
            .join(CURRICULA_DIR)
            .join(format!("{}.json", file_stem(&curriculum.id)));
        write_atomic(&path, curriculum.to_json_pretty().as_bytes())
    }

    pub fn write_students<T: Serialize>(&self, students: &T) -> Result<(), StoreError> {
        let path = self.root.join(STUDENTS_FILE);
        let text = serde_json::to_string_pretty(students).expect("students serialize");
        write_atomic(&path, text.as_bytes())
    }

    pub fn write_snapshot(&self, bytes: &[u8]) -> Result<(), StoreError> {
        write_atomic(&self.snapshot_path(), bytes)
    }

    pub fn read_snapshot(&self) -> Result<Option<Vec<u8>>, StoreError> {
        let path = self.snapshot_path();
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.root.join(SNAPSHOTS_DIR).join(SNAPSHOT_FILE)
    }
}

/// Reads a log without taking the store lock and without repairing it.
pub fn read_events(root: impl AsRef<Path>) -> Result<Vec<Event>, StoreError> {
    read_log(&root.as_ref().join(EVENTS_FILE), false)
}

fn read_log(path: &Path, repair: bool) -> Result<Vec<Event>, StoreError> {
    let bytes = match fs::read(path) {
        Ok(bytes) => bytes,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let complete = match bytes.iter().rposition(|&b| b == b'\n') {
        Some(i) => i + 1,
        None => 0,
    };
    if complete < bytes.len() {
        warn!(
            "{}: dropping torn final line ({} bytes)",
            path.display(),
            bytes.len() - complete
        );
        if repair {
            let file = OpenOptions::new()
                .write(true)
                .open(path)
                .map_err(io_err(path))?;
            file.set_len(complete as u64)
                .and_then(|_| file.sync_all())
                .map_err(io_err(path))?;
        }
    }

    let mut events = Vec::new();
    for raw in bytes[..complete].split(|&b| b == b'\n') {
        if raw.is_empty() {
            continue;
        }
        let expected = events.len() as u64 + 1;
        let text = std::str::from_utf8(raw).map_err(|_| StoreError::CorruptLog {
            seq: expected,
            reason: "line is not UTF-8".into(),
        })?;
        let event = Event::from_line(text).map_err(|reason| StoreError::CorruptLog {
            seq: expected,
            reason,
        })?;
        if event.seq != expected {
            return Err(StoreError::CorruptLog {
                seq: expected,
                reason: format!("expected seq {expected}, found {}", event.seq),
            });
        }
        events.push(event);
    }
    Ok(events)
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let mut file = File::create(&tmp).map_err(io_err(&tmp))?;
    file.write_all(bytes)
        .and_then(|_| file.sync_all())
        .map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}
