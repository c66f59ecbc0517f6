//! JSON-lines persistence for the event log.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{KbError, Result};
use crate::store::event::KbEvent;

pub const EVENT_LOG_FILE: &str = "events.jsonl";
const LOCK_FILE: &str = "kb.lock";

/// Destination for committed events. Writes are buffered until `commit`.
pub trait EventSink: Send + Sync {
    fn append(&mut self, event: &KbEvent) -> Result<()>;
    fn commit(&mut self) -> Result<()>;
}

/// Sink for purely in-memory knowledge bases.
#[derive(Debug, Default)]
pub struct NullSink;

impl EventSink for NullSink {
    fn append(&mut self, _event: &KbEvent) -> Result<()> {
        Ok(())
    }

    fn commit(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Append-only `events.jsonl` inside a data directory, guarded by an exclusive lock.
#[derive(Debug)]
pub struct FileLog {
    path: PathBuf,
    writer: BufWriter<File>,
    _lock: File,
}

impl FileLog {
    /// Opens (creating if needed) the log in `dir` and returns it with the events already on disk.
    pub fn open(dir: &Path) -> Result<(FileLog, Vec<KbEvent>)> {
        std::fs::create_dir_all(dir)?;
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(dir.join(LOCK_FILE))?;
        lock.try_lock().map_err(|e| {
            KbError::StorageFailure(format!("data directory {} is locked: {e}", dir.display()))
        })?;

        let path = dir.join(EVENT_LOG_FILE);
        let events = if path.exists() {
            read_events(BufReader::new(File::open(&path)?))?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok((
            FileLog {
                path,
                writer: BufWriter::new(file),
                _lock: lock,
            },
            events,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl EventSink for FileLog {
    fn append(&mut self, event: &KbEvent) -> Result<()> {
        serde_json::to_writer(&mut self.writer, event)
            .map_err(|e| KbError::StorageFailure(e.to_string()))?;
        self.writer.write_all(b"\n")?;
        Ok(())
    }

    fn commit(&mut self) -> Result<()> {
        self.writer.flush()?;
        self.writer.get_ref().sync_data()?;
        Ok(())
    }
}

/// Parses a JSON-lines event stream. Blank lines are ignored.
pub fn read_events(reader: impl BufRead) -> Result<Vec<KbEvent>> {
    let mut events = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: KbEvent = serde_json::from_str(&line).map_err(|e| KbError::CorruptLog {
            seq: events.len() as u64 + 1,
            reason: format!("line {}: {e}", index + 1),
        })?;
        events.push(event);
    }
    Ok(events)
}

pub fn write_events(mut writer: impl Write, events: &[KbEvent]) -> Result<()> {
    for event in events {
        serde_json::to_writer(&mut writer, event)
            .map_err(|e| KbError::StorageFailure(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
