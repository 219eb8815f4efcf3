//! Persistence: an append-only JSON-lines log plus a blob directory keyed by
//! digest. Without a data directory everything lives in memory.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use expresso_core::api::{hex32, DigestRecord};
use expresso_core::r1cs::Digest32;
use serde::{Deserialize, Serialize};

const LOG_FILE: &str = "registry.log";
const BLOB_DIR: &str = "blobs";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LogEntry {
    /// A ceremony output entered the pool.
    Enqueue {
        #[serde(with = "hex32")]
        pool_digest: Digest32,
        #[serde(with = "hex32")]
        transcript_digest: Digest32,
    },
    /// A pooled artifact was versioned and handed to an IdP.
    Allocate {
        #[serde(with = "hex32")]
        pool_digest: Digest32,
        record: DigestRecord,
    },
}

pub struct Store {
    dir: Option<PathBuf>,
    blobs: RwLock<HashMap<Digest32, Arc<Vec<u8>>>>,
    log: Mutex<Option<File>>,
}

impl Store {
    pub fn memory() -> Self {
        Self {
            dir: None,
            blobs: RwLock::new(HashMap::new()),
            log: Mutex::new(None),
        }
    }

    /// Opens (or creates) a data directory and returns the log to replay.
    pub fn open(dir: &Path) -> io::Result<(Self, Vec<LogEntry>)> {
        fs::create_dir_all(dir.join(BLOB_DIR))?;
        let log_path = dir.join(LOG_FILE);
        let mut entries = Vec::new();
        if log_path.exists() {
            for (n, line) in BufReader::new(File::open(&log_path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry = serde_json::from_str(&line)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("log line {}: {e}", n + 1)))?;
                entries.push(entry);
            }
        }
        let mut blobs = HashMap::new();
        for file in fs::read_dir(dir.join(BLOB_DIR))? {
            let path = file?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
            let Ok(digest) = hex::decode(name) else { continue };
            let Ok(digest) = Digest32::try_from(digest) else { continue };
            blobs.insert(digest, Arc::new(fs::read(&path)?));
        }
        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
        Ok((
            Self {
                dir: Some(dir.to_path_buf()),
                blobs: RwLock::new(blobs),
                log: Mutex::new(Some(log)),
            },
            entries,
        ))
    }

    fn blob_path(&self, digest: &Digest32) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(BLOB_DIR).join(hex::encode(digest)))
    }

    pub fn put_blob(&self, digest: Digest32, bytes: Vec<u8>) -> io::Result<()> {
        if let Some(path) = self.blob_path(&digest) {
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, &bytes)?;
            fs::rename(&tmp, &path)?;
        }
        self.blobs.write().unwrap().insert(digest, Arc::new(bytes));
        Ok(())
    }

    pub fn get_blob(&self, digest: &Digest32) -> Option<Arc<Vec<u8>>> {
        self.blobs.read().unwrap().get(digest).cloned()
    }

    pub fn delete_blob(&self, digest: &Digest32) -> io::Result<()> {
        if let Some(path) = self.blob_path(digest) {
            match fs::remove_file(path) {
                Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e),
                _ => {}
            }
        }
        self.blobs.write().unwrap().remove(digest);
        Ok(())
    }

    pub fn blob_count(&self) -> usize {
        self.blobs.read().unwrap().len()
    }

    /// Appends and syncs one log line.
    pub fn append(&self, entry: &LogEntry) -> io::Result<()> {
        let mut guard = self.log.lock().unwrap();
        if let Some(file) = guard.as_mut() {
            let mut line = serde_json::to_vec(entry).expect("log entries serialize");
            line.push(b'\n');
            file.write_all(&line)?;
            file.sync_data()?;
        }
        Ok(())
    }
}
