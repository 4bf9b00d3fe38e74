use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tracing::warn;

use crate::error::Result;
use crate::key::sha256_hex;

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    request_digest: String,
    response: Value,
    stored_at: u64,
    checksum: String,
}

/// Content-addressed on-disk response cache.
///
/// Entries live at `<root>/<first two hex chars>/<key>.json` and are written
/// through a temp file plus rename, so readers never see a partial entry.
#[derive(Debug)]
pub struct ResponseCache {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl ResponseCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("00");
        self.root.join(shard).join(format!("{key}.json"))
    }

    /// Per-key lock used to serialize concurrent fills of the same entry.
    pub fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().expect("cache lock map poisoned");
        locks.entry(key.to_string()).or_default().clone()
    }

    /// Returns the cached value, treating unreadable or corrupt entries as misses.
    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Option<T> {
        let path = self.entry_path(key);
        let bytes = fs::read(&path).ok()?;
        let entry: CacheEntry = match serde_json::from_slice(&bytes) {
            Ok(e) => e,
            Err(err) => {
                warn!(key, %err, "corrupt cache entry, treating as miss");
                return None;
            }
        };
        let body = serde_json::to_string(&entry.response).ok()?;
        if entry.request_digest != key || sha256_hex(body.as_bytes()) != entry.checksum {
            warn!(key, "cache entry checksum mismatch, treating as miss");
            return None;
        }
        match serde_json::from_value(entry.response) {
            Ok(v) => Some(v),
            Err(err) => {
                warn!(key, %err, "cache entry has unexpected shape, treating as miss");
                None
            }
        }
    }

    pub fn put<T: Serialize>(&self, key: &str, value: &T) -> Result<()> {
        let response = serde_json::to_value(value).map_err(std::io::Error::other)?;
        let body = serde_json::to_string(&response).map_err(std::io::Error::other)?;
        let entry = CacheEntry {
            request_digest: key.to_string(),
            checksum: sha256_hex(body.as_bytes()),
            response,
            stored_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let path = self.entry_path(key);
        let dir = path.parent().expect("entry path has a shard dir");
        fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        serde_json::to_writer(&mut tmp, &entry).map_err(std::io::Error::other)?;
        tmp.flush()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }
}
