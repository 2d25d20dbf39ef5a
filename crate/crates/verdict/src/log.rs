//! Append-only JSON-lines log of scored groups.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::error::HarnessError;
use crate::wire::LogEntry;

#[derive(Debug)]
pub struct ScoreLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl ScoreLog {
    pub fn open(path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes the entry as one line with a single write call.
    pub fn append(&self, entry: &LogEntry) -> std::io::Result<()> {
        let mut line = serde_json::to_string(entry).map_err(std::io::Error::other)?;
        line.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(line.as_bytes())?;
        file.flush()
    }
}

/// Entries with their 1-based line numbers. Blank lines are skipped.
pub fn read_log(path: &Path) -> Result<Vec<(usize, LogEntry)>, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::BadRequest(format!("{}: {}", path.display(), e)))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map(|entry| (i + 1, entry))
                .map_err(|e| HarnessError::BadRequest(format!("{}:{}: {}", path.display(), i + 1, e)))
        })
        .collect()
}
