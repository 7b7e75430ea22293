//! Append-only cache for chat completions and embedding vectors.
//!
//! Each entry is one JSON line `{key, kind, value, created_at}`. The file
//! is read fully at open; lookups are served from memory and inserts
//! append under a lock. A key is written at most once, so equal keys
//! always resolve to equal values.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::GatewayError;

pub const CACHE_FILE_NAME: &str = "responses.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum CacheValue {
    Text(String),
    Embedding(Vec<f64>),
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    #[serde(flatten)]
    value: CacheValue,
    created_at: u64,
}

pub struct ResponseCache {
    path: PathBuf,
    inner: Mutex<Inner>,
}

struct Inner {
    map: HashMap<String, CacheValue>,
    file: File,
}

impl ResponseCache {
    /// Opens (or creates) the cache file under the given directory.
    ///
    /// An unparseable final line is tolerated as an interrupted append;
    /// corruption anywhere else is an error.
    pub fn open(dir: &Path) -> Result<Self, GatewayError> {
        fs::create_dir_all(dir)
            .map_err(|e| GatewayError::Cache(format!("create {}: {e}", dir.display())))?;
        let path = dir.join(CACHE_FILE_NAME);
        let mut map = HashMap::new();
        if path.exists() {
            let file = File::open(&path)
                .map_err(|e| GatewayError::Cache(format!("open {}: {e}", path.display())))?;
            let lines: Vec<String> = BufReader::new(file)
                .lines()
                .collect::<Result<_, _>>()
                .map_err(|e| GatewayError::Cache(format!("read {}: {e}", path.display())))?;
            let last = lines.len().saturating_sub(1);
            for (idx, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheLine>(line) {
                    Ok(entry) => {
                        // Append-only: the first occurrence of a key wins.
                        map.entry(entry.key).or_insert(entry.value);
                    }
                    Err(e) if idx == last => {
                        let _ = e; // truncated trailing append
                    }
                    Err(e) => {
                        return Err(GatewayError::Cache(format!(
                            "{}:{}: corrupt cache line: {e}",
                            path.display(),
                            idx + 1
                        )));
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| GatewayError::Cache(format!("open {}: {e}", path.display())))?;
        Ok(Self {
            path,
            inner: Mutex::new(Inner { map, file }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, key: &str) -> Option<CacheValue> {
        self.inner.lock().expect("cache lock").map.get(key).cloned()
    }

    /// Records a value for a key unless one already exists. Returns whether
    /// the value was written.
    pub fn put_if_absent(&self, key: &str, value: CacheValue) -> Result<bool, GatewayError> {
        let mut inner = self.inner.lock().expect("cache lock");
        if inner.map.contains_key(key) {
            return Ok(false);
        }
        let line = CacheLine {
            key: key.to_string(),
            value: value.clone(),
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let mut serialized = serde_json::to_string(&line)
            .map_err(|e| GatewayError::Cache(format!("serialize entry: {e}")))?;
        serialized.push('\n');
        inner
            .file
            .write_all(serialized.as_bytes())
            .map_err(|e| GatewayError::Cache(format!("append {}: {e}", self.path.display())))?;
        inner.map.insert(key.to_string(), value);
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
