//! On-disk layout of one session directory:
//!
//! ```text
//! sessions/<id>/meta.json      creation request summary, resolved configuration
//! sessions/<id>/forest.json    the fitted forest
//! sessions/<id>/train.csv      the pool the session labels
//! sessions/<id>/holdout.csv    labeled test rows (only with a holdout split)
//! sessions/<id>/events.jsonl   append-only event log
//! sessions/<id>/state.json     checkpoint, rewritten after every label
//! ```

use alif_core::Label;
use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

pub const META: &str = "meta.json";
pub const FOREST: &str = "forest.json";
pub const TRAIN: &str = "train.csv";
pub const HOLDOUT: &str = "holdout.csv";
pub const EVENTS: &str = "events.jsonl";
pub const STATE: &str = "state.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum Event {
    Create,
    Query { point_index: usize },
    Label { point_index: usize, label: Label },
    Abstain { point_index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    log: File,
}

impl SessionStore {
    pub fn create(dir: PathBuf) -> io::Result<Self> {
        fs::create_dir_all(&dir)?;
        Self::open(dir)
    }

    pub fn open(dir: PathBuf) -> io::Result<Self> {
        let log = OpenOptions::new().create(true).append(true).open(dir.join(EVENTS))?;
        Ok(Self { dir, log })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes through a temporary file and renames, so readers never see a
    /// half-written file.
    pub fn write_atomic(&self, name: &str, bytes: &[u8]) -> io::Result<()> {
        let tmp = self.dir.join(format!(".{name}.tmp"));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.dir.join(name))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> io::Result<()> {
        let text = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
        self.write_atomic(name, &text)
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> io::Result<Option<T>> {
        match fs::read(self.dir.join(name)) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{name}: {e}"))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn append(&mut self, record: &EventRecord) -> io::Result<()> {
        let mut line = serde_json::to_vec(record).map_err(io::Error::other)?;
        line.push(b'\n');
        self.log.write_all(&line)?;
        self.log.sync_data()
    }

    /// Events in log order. A torn final line (crash mid-append) is dropped.
    pub fn read_events(&self) -> io::Result<Vec<EventRecord>> {
        let file = File::open(self.dir.join(EVENTS))?;
        let lines: Vec<String> = BufReader::new(file).lines().collect::<io::Result<_>>()?;
        let mut events = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<EventRecord>(line) {
                Ok(rec) => events.push(rec),
                Err(e) if i + 1 == lines.len() => {
                    log::warn!("{}: dropping torn last event: {e}", self.dir.display());
                }
                Err(e) => {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("{EVENTS} line {}: {e}", i + 1),
                    ))
                }
            }
        }
        Ok(events)
    }
}
