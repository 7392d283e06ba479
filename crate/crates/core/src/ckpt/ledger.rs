use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load, CheckpointRecord, CkptError};

/// One JSON line of a ledger file. `path` is relative to the ledger's
/// directory unless absolute.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub path: String,
    pub tokens_seen: u64,
    pub step: u64,
    pub stage_tag: String,
    pub run_id: String,
}

/// Checkpoints of one run in non-decreasing `tokens_seen` order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ledger {
    entries: Vec<LedgerEntry>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: LedgerEntry) -> Result<(), CkptError> {
        if let Some(last) = self.entries.last() {
            if entry.tokens_seen < last.tokens_seen {
                return Err(CkptError::Ledger(format!(
                    "tokens_seen {} after {} in `{}`",
                    entry.tokens_seen, last.tokens_seen, entry.path
                )));
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Entry with the largest `tokens_seen ≤ max_tokens`; the latest such entry
    /// when several share that count.
    pub fn query(&self, max_tokens: u64) -> Result<&LedgerEntry, CkptError> {
        if self.entries.is_empty() {
            return Err(CkptError::Ledger("empty ledger".into()));
        }
        self.entries.iter().rev().find(|e| e.tokens_seen <= max_tokens).ok_or(CkptError::NotFound(max_tokens))
    }

    pub fn to_jsonl(&self) -> String {
        self.entries.iter().map(|e| serde_json::to_string(e).expect("entry serializes") + "\n").collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, CkptError> {
        let mut ledger = Ledger::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let entry = serde_json::from_str(line).map_err(|e| CkptError::Ledger(format!("line {}: {e}", i + 1)))?;
            ledger.push(entry)?;
        }
        Ok(ledger)
    }

    pub fn read(path: &Path) -> Result<Self, CkptError> {
        Self::from_jsonl(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), CkptError> {
        super::format::write_atomic(path, self.to_jsonl().as_bytes())
    }

    /// Appends one line to the ledger file at `path`, creating it if needed.
    pub fn append_to_file(&mut self, path: &Path, entry: LedgerEntry) -> Result<(), CkptError> {
        let line = serde_json::to_string(&entry).expect("entry serializes") + "\n";
        self.push(entry)?;
        let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
        f.write_all(line.as_bytes())?;
        Ok(())
    }
}

/// Resolves an entry path against the directory holding the ledger.
pub fn resolve(base_dir: &Path, entry: &LedgerEntry) -> PathBuf {
    let p = Path::new(&entry.path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

/// Loads the checkpoint with the largest `tokens_seen ≤ max_tokens`.
pub fn ledger_query(ledger: &Ledger, base_dir: &Path, max_tokens: u64) -> Result<CheckpointRecord, CkptError> {
    load(&resolve(base_dir, ledger.query(max_tokens)?))
}
