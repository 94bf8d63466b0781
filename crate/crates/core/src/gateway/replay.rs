//! Record/replay store for chat exchanges.
//!
//! One JSONL file, one exchange per line with the key field first. Writes
//! are serialized internally so concurrent workers can record safely.

use super::ChatExchange;
use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

const STORE_FILE: &str = "exchanges.jsonl";

#[derive(Debug)]
pub enum ReplayStoreError {
    Io(std::io::Error),
    Corrupt { line: usize, source: serde_json::Error },
}

impl std::fmt::Display for ReplayStoreError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReplayStoreError::Io(e) => write!(f, "replay store io: {e}"),
            ReplayStoreError::Corrupt { line, source } => {
                write!(f, "corrupt replay store at line {line}: {source}")
            }
        }
    }
}

impl std::error::Error for ReplayStoreError {}

pub struct ReplayStore {
    path: PathBuf,
    entries: Mutex<BTreeMap<String, ChatExchange>>,
    writer: Mutex<Option<File>>,
}

impl ReplayStore {
    fn store_file(dir: &Path) -> PathBuf {
        dir.join(STORE_FILE)
    }

    fn load_entries(path: &Path) -> Result<BTreeMap<String, ChatExchange>, ReplayStoreError> {
        let mut entries = BTreeMap::new();
        if !path.exists() {
            return Ok(entries);
        }
        let file = File::open(path).map_err(ReplayStoreError::Io)?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(ReplayStoreError::Io)?;
            if line.trim().is_empty() {
                continue;
            }
            let exchange: ChatExchange = serde_json::from_str(&line)
                .map_err(|source| ReplayStoreError::Corrupt { line: i + 1, source })?;
            entries.insert(exchange.key.clone(), exchange);
        }
        Ok(entries)
    }

    /// Open for replay: read-only, misses are errors at the gateway level.
    pub fn open_replay(dir: &Path) -> Result<Self, ReplayStoreError> {
        let path = Self::store_file(dir);
        let entries = Self::load_entries(&path)?;
        Ok(ReplayStore { path, entries: Mutex::new(entries), writer: Mutex::new(None) })
    }

    /// Open for recording: existing entries are kept and served, new
    /// exchanges are appended.
    pub fn open_record(dir: &Path) -> Result<Self, ReplayStoreError> {
        std::fs::create_dir_all(dir).map_err(ReplayStoreError::Io)?;
        let path = Self::store_file(dir);
        let entries = Self::load_entries(&path)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(ReplayStoreError::Io)?;
        Ok(ReplayStore { path, entries: Mutex::new(entries), writer: Mutex::new(Some(file)) })
    }

    pub fn get(&self, key: &str) -> Option<ChatExchange> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    pub fn put(&self, exchange: &ChatExchange) -> Result<(), ReplayStoreError> {
        let mut writer = self.writer.lock().unwrap();
        let file = writer.as_mut().expect("put() requires a store opened for recording");
        let line = serde_json::to_string(exchange)
            .map_err(|source| ReplayStoreError::Corrupt { line: 0, source })?;
        writeln!(file, "{line}").map_err(ReplayStoreError::Io)?;
        self.entries.lock().unwrap().insert(exchange.key.clone(), exchange.clone());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
