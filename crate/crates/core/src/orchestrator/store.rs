//! Append-only run store: `config.json`, `attempts.jsonl`, `exchanges.jsonl`.
//!
//! Records are immutable once written and every JSON document has a stable
//! key order, so a deterministic replay run reproduces the store byte for
//! byte.

use super::{AttemptRecord, OrchestratorError, RunConfig};
use crate::gateway::ChatExchange;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

pub const CONFIG_FILE: &str = "config.json";
pub const ATTEMPTS_FILE: &str = "attempts.jsonl";
pub const EXCHANGES_FILE: &str = "exchanges.jsonl";

/// Why an exchange was issued; the accounting tests count per purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangePurpose {
    Generation,
    WfRepair,
    Judge,
    CorrectnessRepair,
}

/// One gateway exchange as logged in the run store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedExchange {
    pub purpose: ExchangePurpose,
    /// Attempt the exchange belongs to (batch generations carry the cell
    /// prefix rather than a single task's id).
    pub context: String,
    pub exchange: ChatExchange,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConfigDocument {
    config: RunConfig,
    hash: String,
}

/// Canonical hash of a run configuration.
pub fn config_hash(config: &RunConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Open (or create) the store directory for a run and validate the stored
/// config hash against the one supplied.
pub struct StoreWriter {
    dir: PathBuf,
    attempts: File,
    exchanges: File,
}

impl StoreWriter {
    pub fn create(dir: &Path, config: &RunConfig) -> Result<Self, OrchestratorError> {
        fs::create_dir_all(dir).map_err(OrchestratorError::Io)?;
        let config_path = dir.join(CONFIG_FILE);
        let hash = config_hash(config);
        if config_path.exists() {
            let raw = fs::read_to_string(&config_path).map_err(OrchestratorError::Io)?;
            let stored: ConfigDocument = serde_json::from_str(&raw)
                .map_err(|e| OrchestratorError::CorruptStore(format!("config.json: {e}")))?;
            if stored.hash != hash {
                return Err(OrchestratorError::ConfigMismatch {
                    expected: stored.hash,
                    found: hash,
                });
            }
        } else {
            let document = ConfigDocument { config: config.clone(), hash };
            let body = serde_json::to_string_pretty(&document)
                .expect("config document serializes");
            fs::write(&config_path, body + "\n").map_err(OrchestratorError::Io)?;
        }

        let attempts = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(ATTEMPTS_FILE))
            .map_err(OrchestratorError::Io)?;
        let exchanges = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(EXCHANGES_FILE))
            .map_err(OrchestratorError::Io)?;
        Ok(StoreWriter { dir: dir.to_path_buf(), attempts, exchanges })
    }

    pub fn append_attempt(&mut self, record: &AttemptRecord) -> Result<(), OrchestratorError> {
        let line = serde_json::to_string(record)
            .map_err(|e| OrchestratorError::CorruptStore(e.to_string()))?;
        writeln!(self.attempts, "{line}").map_err(OrchestratorError::Io)
    }

    pub fn append_exchange(
        &mut self,
        logged: &LoggedExchange,
    ) -> Result<(), OrchestratorError> {
        let line = serde_json::to_string(logged)
            .map_err(|e| OrchestratorError::CorruptStore(e.to_string()))?;
        writeln!(self.exchanges, "{line}").map_err(OrchestratorError::Io)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

/// A fully loaded, immutable run store.
#[derive(Debug, Clone)]
pub struct RunStore {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub config_hash: String,
    pub records: Vec<AttemptRecord>,
    pub exchanges: Vec<LoggedExchange>,
}

impl RunStore {
    pub fn load(store_root: &Path, run_id: &str) -> Result<Self, OrchestratorError> {
        let dir = store_root.join(run_id);
        let config_path = dir.join(CONFIG_FILE);
        if !config_path.exists() {
            return Err(OrchestratorError::MissingStore(dir.display().to_string()));
        }
        let raw = fs::read_to_string(&config_path).map_err(OrchestratorError::Io)?;
        let document: ConfigDocument = serde_json::from_str(&raw)
            .map_err(|e| OrchestratorError::CorruptStore(format!("config.json: {e}")))?;

        let records = read_jsonl(&dir.join(ATTEMPTS_FILE))?;
        let exchanges = read_jsonl(&dir.join(EXCHANGES_FILE))?;
        Ok(RunStore {
            dir,
            config: document.config,
            config_hash: document.hash,
            records,
            exchanges,
        })
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, OrchestratorError> {
    let mut items = Vec::new();
    if !path.exists() {
        return Ok(items);
    }
    let file = File::open(path).map_err(OrchestratorError::Io)?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(OrchestratorError::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| {
            OrchestratorError::CorruptStore(format!(
                "{} line {}: {e}",
                path.display(),
                i + 1
            ))
        })?;
        items.push(item);
    }
    Ok(items)
}
