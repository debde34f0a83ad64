//! Append-only event store: one newline-delimited JSON log per instance
//! under `state/instances/<instance_id>.log`.
//!
//! Appends flush before returning so that an event is durable before its
//! side effect runs. Corrupted logs are quarantined by renaming, which keeps
//! one bad instance from taking down recovery of the others.

use crate::engine::event::InstanceEvent;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("event store I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupted log {instance} at line {line}: {detail}")]
    Corrupt {
        instance: String,
        line: usize,
        detail: String,
    },
    #[error("log {instance}: non-monotonic sequence {found} after {previous}")]
    NonMonotonic {
        instance: String,
        previous: u64,
        found: u64,
    },
}

#[derive(Debug)]
pub struct EventStore {
    dir: PathBuf,
}

impl EventStore {
    /// Open (creating if needed) the store rooted at `dir`, conventionally
    /// `<base>/state/instances`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| StoreError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(EventStore { dir })
    }

    pub fn log_path(&self, instance_id: &str) -> PathBuf {
        self.dir.join(format!("{instance_id}.log"))
    }

    /// Append one event and flush it to the OS before returning.
    pub fn append(&self, instance_id: &str, event: &InstanceEvent) -> Result<(), StoreError> {
        let path = self.log_path(instance_id);
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        let mut line = serde_json::to_string(event).expect("events serialize infallibly");
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(io)?;
        file.flush().map_err(io)
    }

    /// Load and verify one instance log: every line parses and sequence
    /// numbers strictly increase.
    pub fn load(&self, instance_id: &str) -> Result<Vec<InstanceEvent>, StoreError> {
        let path = self.log_path(instance_id);
        let file = File::open(&path).map_err(|source| StoreError::Io {
            path: path.clone(),
            source,
        })?;
        let mut events = Vec::new();
        let mut previous_seq = 0u64;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| StoreError::Io {
                path: path.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let event: InstanceEvent =
                serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    instance: instance_id.to_string(),
                    line: i + 1,
                    detail: e.to_string(),
                })?;
            if event.seq <= previous_seq {
                return Err(StoreError::NonMonotonic {
                    instance: instance_id.to_string(),
                    previous: previous_seq,
                    found: event.seq,
                });
            }
            previous_seq = event.seq;
            events.push(event);
        }
        Ok(events)
    }

    /// Instance ids with a log file present.
    pub fn list_instances(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        let entries = fs::read_dir(&self.dir).map_err(|source| StoreError::Io {
            path: self.dir.clone(),
            source,
        })?;
        for entry in entries {
            let entry = entry.map_err(|source| StoreError::Io {
                path: self.dir.clone(),
                source,
            })?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".log") {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn exists(&self, instance_id: &str) -> bool {
        self.log_path(instance_id).exists()
    }

    /// Remove an instance log — the "move" half of archiving to the audit
    /// trail.
    pub fn remove(&self, instance_id: &str) -> Result<(), StoreError> {
        let path = self.log_path(instance_id);
        fs::remove_file(&path).map_err(|source| StoreError::Io { path, source })
    }

    /// Set a damaged log aside as `<id>.log.corrupt` so recovery of other
    /// instances can proceed.
    pub fn quarantine(&self, instance_id: &str) -> Result<PathBuf, StoreError> {
        let from = self.log_path(instance_id);
        let to = from.with_extension("log.corrupt");
        fs::rename(&from, &to).map_err(|source| StoreError::Io {
            path: from.clone(),
            source,
        })?;
        Ok(to)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::event::{payload, EventKind};

    fn event(seq: u64) -> InstanceEvent {
        InstanceEvent {
            seq,
            ts: seq * 10,
            kind: EventKind::ActivityReady,
            payload: payload::activity_ready("A"),
        }
    }

    #[test]
    fn append_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let store = EventStore::open(dir.path().join("instances")).unwrap();
        store.append("i-1", &event(1)).unwrap();
        store.append("i-1", &event(2)).unwrap();
        let events = store.load("i-1").unwrap();
        assert_eq!(events, vec![event(1), event(2)]);
        assert_eq!(store.list_instances().unwrap(), vec!["i-1"]);
    }

    #[test]
    fn non_monotonic_sequence_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let store = EventStore::open(dir.path()).unwrap();
        store.append("i-2", &event(1)).unwrap();
        store.append("i-2", &event(3)).unwrap();
        store.append("i-2", &event(2)).unwrap();
        match store.load("i-2") {
            Err(StoreError::NonMonotonic {
                previous, found, ..
            }) => {
                assert_eq!((previous, found), (3, 2));
            }
            other => panic!("expected NonMonotonic, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_line_is_reported_with_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let store = EventStore::open(dir.path()).unwrap();
        store.append("i-3", &event(1)).unwrap();
        let path = store.log_path("i-3");
        let mut raw = fs::read_to_string(&path).unwrap();
        raw.push_str("{not json\n");
        fs::write(&path, raw).unwrap();
        match store.load("i-3") {
            Err(StoreError::Corrupt { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected Corrupt, got {other:?}"),
        }
    }

    #[test]
    fn quarantine_moves_the_log_aside() {
        let dir = tempfile::tempdir().unwrap();
        let store = EventStore::open(dir.path()).unwrap();
        store.append("i-4", &event(1)).unwrap();
        let moved = store.quarantine("i-4").unwrap();
        assert!(moved.exists());
        assert!(!store.exists("i-4"));
        assert!(store.list_instances().unwrap().is_empty());
    }

    #[test]
    fn remove_leaves_zero_trace() {
        let dir = tempfile::tempdir().unwrap();
        let store = EventStore::open(dir.path()).unwrap();
        store.append("i-5", &event(1)).unwrap();
        store.remove("i-5").unwrap();
        assert!(!store.exists("i-5"));
        assert!(store.list_instances().unwrap().is_empty());
    }
}
