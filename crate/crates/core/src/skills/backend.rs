//! Persistence for the skill store.
//!
//! The file backend keeps two newline-delimited JSON files in a directory:
//! `skills.snapshot` (compacted state, replaced atomically by rename) and
//! `skills.log` (records appended since the snapshot, fsynced per write).
//! Every record carries a log sequence number so replay after a crash
//! between "snapshot renamed" and "log truncated" stays idempotent.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{SkillKind, SkillMeta, StoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum LogRecord {
    Put {
        lsn: u64,
        name: String,
        version: u32,
        kind: SkillKind,
        payload: Value,
        meta: SkillMeta,
    },
    Delete {
        lsn: u64,
        name: String,
    },
    /// First line of a snapshot: everything up to `lsn` is included.
    Checkpoint {
        lsn: u64,
    },
}

impl LogRecord {
    pub fn lsn(&self) -> u64 {
        match self {
            LogRecord::Put { lsn, .. } | LogRecord::Delete { lsn, .. } | LogRecord::Checkpoint { lsn } => *lsn,
        }
    }
}

pub trait Backend: Send {
    /// All committed records in replay order.
    fn load(&mut self) -> Result<Vec<LogRecord>, StoreError>;
    /// Durably appends one record; returns only after it is committed.
    fn append(&mut self, rec: &LogRecord) -> Result<(), StoreError>;
    /// Replaces all history with `records` (which start with a checkpoint).
    fn compact(&mut self, records: &[LogRecord]) -> Result<(), StoreError>;
}

#[derive(Debug, Default)]
pub struct MemoryBackend {
    records: Vec<LogRecord>,
}

impl Backend for MemoryBackend {
    fn load(&mut self) -> Result<Vec<LogRecord>, StoreError> {
        Ok(self.records.clone())
    }

    fn append(&mut self, rec: &LogRecord) -> Result<(), StoreError> {
        self.records.push(rec.clone());
        Ok(())
    }

    fn compact(&mut self, records: &[LogRecord]) -> Result<(), StoreError> {
        self.records = records.to_vec();
        Ok(())
    }
}

#[derive(Debug)]
pub struct FileBackend {
    dir: PathBuf,
    log: Option<File>,
}

const SNAPSHOT: &str = "skills.snapshot";
const LOG: &str = "skills.log";

fn io(path: &Path, e: std::io::Error) -> StoreError {
    StoreError::Io(format!("{}: {e}", path.display()))
}

impl FileBackend {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        Ok(Self { dir, log: None })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn log_path(&self) -> PathBuf {
        self.dir.join(LOG)
    }

    fn snapshot_path(&self) -> PathBuf {
        self.dir.join(SNAPSHOT)
    }

    /// Reads records from `path`. A final line without a newline or that
    /// fails to parse is a torn write: it is dropped, and the file is cut
    /// back to the last good record when `repair` is set.
    fn read(path: &Path, repair: bool) -> Result<Vec<LogRecord>, StoreError> {
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io(path, e)),
        };
        let mut reader = BufReader::new(file);
        let mut records = Vec::new();
        let mut good_len = 0u64;
        let mut line = Vec::new();
        loop {
            line.clear();
            let n = reader.read_until(b'\n', &mut line).map_err(|e| io(path, e))?;
            if n == 0 {
                break;
            }
            let complete = line.last() == Some(&b'\n');
            match serde_json::from_slice::<LogRecord>(&line) {
                Ok(rec) if complete => {
                    records.push(rec);
                    good_len += n as u64;
                }
                Ok(_) | Err(_) => {
                    let mut rest = Vec::new();
                    std::io::Read::read_to_end(&mut reader, &mut rest).map_err(|e| io(path, e))?;
                    if !rest.is_empty() {
                        return Err(StoreError::Corrupt(format!(
                            "{}: bad record at byte {good_len}",
                            path.display()
                        )));
                    }
                    log::warn!("{}: dropping torn tail at byte {good_len}", path.display());
                    if repair {
                        let f = OpenOptions::new().write(true).open(path).map_err(|e| io(path, e))?;
                        f.set_len(good_len).map_err(|e| io(path, e))?;
                        f.sync_all().map_err(|e| io(path, e))?;
                    }
                    break;
                }
            }
        }
        Ok(records)
    }

    fn sync_dir(&self) {
        // Directory fsync makes renames durable; not supported everywhere.
        if let Ok(d) = File::open(&self.dir) {
            let _ = d.sync_all();
        }
    }
}

impl Backend for FileBackend {
    fn load(&mut self) -> Result<Vec<LogRecord>, StoreError> {
        let mut records = Self::read(&self.snapshot_path(), false)?;
        let covered = match records.first() {
            Some(LogRecord::Checkpoint { lsn }) => *lsn,
            Some(_) => return Err(StoreError::Corrupt("snapshot lacks a checkpoint".into())),
            None => 0,
        };
        let tail = Self::read(&self.log_path(), true)?;
        records.extend(tail.into_iter().filter(|r| r.lsn() > covered));
        Ok(records)
    }

    fn append(&mut self, rec: &LogRecord) -> Result<(), StoreError> {
        let path = self.log_path();
        if self.log.is_none() {
            let f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| io(&path, e))?;
            self.log = Some(f);
        }
        let f = self.log.as_mut().expect("opened above");
        let mut line = serde_json::to_vec(rec).map_err(|e| StoreError::Io(e.to_string()))?;
        line.push(b'\n');
        f.write_all(&line).map_err(|e| io(&path, e))?;
        f.sync_data().map_err(|e| io(&path, e))?;
        Ok(())
    }

    fn compact(&mut self, records: &[LogRecord]) -> Result<(), StoreError> {
        let tmp = self.dir.join(format!("{SNAPSHOT}.tmp"));
        {
            let mut f = File::create(&tmp).map_err(|e| io(&tmp, e))?;
            for rec in records {
                let mut line = serde_json::to_vec(rec).map_err(|e| StoreError::Io(e.to_string()))?;
                line.push(b'\n');
                f.write_all(&line).map_err(|e| io(&tmp, e))?;
            }
            f.sync_all().map_err(|e| io(&tmp, e))?;
        }
        fs::rename(&tmp, self.snapshot_path()).map_err(|e| io(&tmp, e))?;
        self.sync_dir();
        // A crash here leaves already-covered records in the log; load skips them.
        self.log = None;
        let path = self.log_path();
        let f = File::create(&path).map_err(|e| io(&path, e))?;
        f.sync_all().map_err(|e| io(&path, e))?;
        Ok(())
    }
}
