//! Append-only, content-hash-keyed record cache.
//!
//! On disk each entry is one JSON line `{"key": "<sha256>", "value": ...}`.
//! Later entries for a key win. A torn final line (process killed during a
//! write) is ignored on reload.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Entry<K, V> {
    key: K,
    value: V,
}

pub struct RecordCache<V> {
    path: Option<PathBuf>,
    map: RwLock<HashMap<String, V>>,
    writer: Mutex<Option<File>>,
}

impl<V> RecordCache<V>
where
    V: Serialize + DeserializeOwned + Clone,
{
    pub fn in_memory() -> Self {
        RecordCache {
            path: None,
            map: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Open (or create) a cache file and load its entries.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut map = HashMap::new();
        if path.exists() {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let complete = text.ends_with('\n');
            let lines: Vec<&str> = text.lines().collect();
            for (idx, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Entry<String, V>>(line) {
                    Ok(e) => {
                        map.insert(e.key, e.value);
                    }
                    Err(_) if idx + 1 == lines.len() && !complete => {}
                    Err(e) => {
                        return Err(Error::Parse {
                            path: path.to_path_buf(),
                            line: idx + 1,
                            message: e.to_string(),
                        })
                    }
                }
            }
            if !complete && !text.is_empty() {
                // Drop the torn line so the next append starts cleanly.
                let keep = text.rfind('\n').map_or(0, |i| i + 1);
                let f = OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
                f.set_len(keep as u64).map_err(|e| Error::io(path, e))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(RecordCache {
            path: Some(path.to_path_buf()),
            map: RwLock::new(map),
            writer: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<V> {
        self.map.read().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: String, value: V) -> Result<()> {
        let mut writer = self.writer.lock().expect("cache writer lock");
        if let Some(f) = writer.as_mut() {
            let mut line = serde_json::to_vec(&Entry {
                key: &key,
                value: &value,
            })
            .expect("cache entry serializes");
            line.push(b'\n');
            let path = self.path.as_deref().unwrap_or(Path::new("<cache>"));
            f.write_all(&line).map_err(|e| Error::io(path, e))?;
            f.flush().map_err(|e| Error::io(path, e))?;
        }
        self.map.write().expect("cache lock").insert(key, value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<V> Default for RecordCache<V>
where
    V: Serialize + DeserializeOwned + Clone,
{
    fn default() -> Self {
        Self::in_memory()
    }
}

/// Stable hex key over a sequence of parts. Parts are length-prefixed so
/// they cannot run into each other.
pub fn content_key<I, P>(parts: I) -> String
where
    I: IntoIterator<Item = P>,
    P: AsRef<[u8]>,
{
    let mut h = Sha256::new();
    for p in parts {
        let p = p.as_ref();
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}
