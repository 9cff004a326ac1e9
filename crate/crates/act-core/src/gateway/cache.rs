//! Append-only query cache keyed by a digest of the full query identity.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gateway::{BackendIdentity, Role};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheEntry {
    digest: String,
    role: Role,
    response_text: String,
}

/// Memoises raw backend responses. Optionally persisted as JSONL, one
/// `{digest, role, response_text}` object per line; entries are only ever
/// appended and the first entry for a digest wins.
#[derive(Debug)]
pub struct QueryCache {
    map: RwLock<HashMap<String, String>>,
    file: Option<Mutex<File>>,
}

impl QueryCache {
    /// A cache that lives only as long as the process.
    pub fn in_memory() -> QueryCache {
        QueryCache {
            map: RwLock::new(HashMap::new()),
            file: None,
        }
    }

    /// Opens or creates a persistent cache file and loads existing entries.
    pub fn open(path: &Path) -> Result<QueryCache> {
        let mut map = HashMap::new();
        if path.exists() {
            let raw = std::fs::read_to_string(path)?;
            for (line_no, line) in raw.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry = serde_json::from_str(line).map_err(|e| {
                    Error::Data(format!(
                        "{}:{}: corrupt cache entry: {e}",
                        path.display(),
                        line_no + 1
                    ))
                })?;
                map.entry(entry.digest).or_insert(entry.response_text);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(QueryCache {
            map: RwLock::new(map),
            file: Some(Mutex::new(file)),
        })
    }

    pub fn get(&self, digest: &str) -> Option<String> {
        self.map.read().expect("cache lock").get(digest).cloned()
    }

    /// Records a response. Returns `false` when the digest was already
    /// present, in which case nothing is written.
    pub fn put(&self, digest: &str, role: Role, response_text: &str) -> Result<bool> {
        {
            let mut map = self.map.write().expect("cache lock");
            if map.contains_key(digest) {
                return Ok(false);
            }
            map.insert(digest.to_string(), response_text.to_string());
        }
        if let Some(file) = &self.file {
            let entry = CacheEntry {
                digest: digest.to_string(),
                role,
                response_text: response_text.to_string(),
            };
            let line = serde_json::to_string(&entry)?;
            let mut file = file.lock().expect("cache file lock");
            file.write_all(line.as_bytes())?;
            file.write_all(b"\n")?;
            file.flush()?;
        }
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Digest identifying one logical query: backend kind, model, role, prompt
/// and input serialised as a JSON array and hashed with SHA-256.
pub fn digest(identity: &BackendIdentity, role: Role, prompt: &str, input: Option<&str>) -> String {
    let key = serde_json::json!([identity.kind, identity.model, role.as_str(), prompt, input]);
    let serialized = serde_json::to_string(&key).expect("digest key serialises");
    let mut hasher = Sha256::new();
    hasher.update(serialized.as_bytes());
    let out = hasher.finalize();
    let mut hex = String::with_capacity(out.len() * 2);
    for byte in out {
        use std::fmt::Write as _;
        write!(hex, "{byte:02x}").expect("hex write");
    }
    hex
}
