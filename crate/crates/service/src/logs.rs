//! Append-only JSON Lines files for traces and ratings.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// One file, one writer. Appends are serialized by the mutex and flushed
/// before returning.
#[derive(Debug)]
pub struct JsonlLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl JsonlLog {
    pub fn open(path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, file: Mutex::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append<T: Serialize>(&self, record: &T) -> std::io::Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(line.as_bytes())?;
        file.flush()
    }

    /// Every record in file order. Lines that fail to parse are skipped with
    /// a warning.
    pub fn read_all<T: DeserializeOwned>(&self) -> std::io::Result<Vec<T>> {
        let _guard = self.file.lock().unwrap_or_else(|e| e.into_inner());
        let reader = BufReader::new(File::open(&self.path)?);
        let mut out = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line) {
                Ok(r) => out.push(r),
                Err(e) => tracing::warn!("{}:{}: skipping malformed record: {e}", self.path.display(), n + 1),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn appends_in_order_and_skips_broken_lines() {
        let dir = tempfile::tempdir().unwrap();
        let log = JsonlLog::open(dir.path().join("nested/log.jsonl")).unwrap();
        log.append(&serde_json::json!({ "n": 1 })).unwrap();
        std::fs::OpenOptions::new().append(true).open(log.path()).unwrap().write_all(b"{ torn\n\n").unwrap();
        log.append(&serde_json::json!({ "n": 2 })).unwrap();
        let records: Vec<serde_json::Value> = log.read_all().unwrap();
        assert_eq!(records, vec![serde_json::json!({ "n": 1 }), serde_json::json!({ "n": 2 })]);

        let reopened = JsonlLog::open(log.path()).unwrap();
        reopened.append(&serde_json::json!({ "n": 3 })).unwrap();
        assert_eq!(reopened.read_all::<serde_json::Value>().unwrap().len(), 3);
    }
}
