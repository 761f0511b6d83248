//! Content-addressed response cache.
//!
//! Layout: `<root>/<first two hex chars>/<digest>.json`. Writes go to a temp
//! file in the shard directory and are renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{ChatMessage, Generation, SamplingParams};
use crate::error::{Error, Result};

const STATS_FILE: &str = "last_run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub backend_id: String,
    pub messages: Vec<ChatMessage>,
    pub params: SamplingParams,
    pub response: Vec<Generation>,
    pub created_unix: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub hits: u64,
    pub misses: u64,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("00");
        self.root.join(shard).join(format!("{key}.json"))
    }

    /// A missing or unreadable entry is a miss. Corrupt entries are logged
    /// and get overwritten by the next `put`.
    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        let path = self.path_for(key);
        let bytes = fs::read(&path).ok()?;
        match serde_json::from_slice::<CacheEntry>(&bytes) {
            Ok(entry) if entry.key == key => Some(entry),
            Ok(_) => {
                log::warn!("cache entry {} has mismatched key, ignoring", path.display());
                None
            }
            Err(e) => {
                log::warn!("corrupt cache entry {}: {e}", path.display());
                None
            }
        }
    }

    pub fn put(&self, entry: &CacheEntry) -> Result<()> {
        let path = self.path_for(&entry.key);
        let dir = path.parent().expect("cache path has a shard directory");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        serde_json::to_writer_pretty(&mut tmp, entry)?;
        tmp.write_all(b"\n").map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        Ok(())
    }

    pub fn write_run_stats(&self, stats: &RunStats) -> Result<()> {
        let path = self.root.join(STATS_FILE);
        let body = serde_json::to_vec_pretty(stats)?;
        fs::write(&path, body).map_err(|e| Error::io(&path, e))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CacheSummary {
    pub entries: u64,
    pub bytes: u64,
    pub corrupted: Vec<PathBuf>,
    pub last_run: Option<RunStats>,
}

/// Walk a cache root. A root that does not exist yet reports zeros.
pub fn inspect(root: &Path) -> Result<CacheSummary> {
    let mut summary = CacheSummary::default();
    if !root.exists() {
        return Ok(summary);
    }
    let mut shards: Vec<PathBuf> = read_dir_sorted(root)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    shards.sort();
    for shard in shards {
        for path in read_dir_sorted(&shard)? {
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            match serde_json::from_slice::<CacheEntry>(&bytes) {
                Ok(entry) if entry.key == stem => {
                    summary.entries += 1;
                    summary.bytes += bytes.len() as u64;
                }
                _ => summary.corrupted.push(path),
            }
        }
    }
    let stats_path = root.join(STATS_FILE);
    if let Ok(bytes) = fs::read(&stats_path) {
        summary.last_run = serde_json::from_slice(&bytes).ok();
    }
    Ok(summary)
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

pub(crate) fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
