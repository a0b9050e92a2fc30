use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Hex SHA-256 of `model`, a NUL byte, then `input`.
pub fn cache_key(model: &str, input: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0u8]);
    h.update(input.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Serialize, Deserialize)]
struct Line {
    key: String,
    embedding: Vec<f64>,
}

/// Content-addressed embedding store: an in-memory map backed by an
/// append-only JSON-lines file. Readers share a read lock; appends are
/// serialized.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    path: Option<PathBuf>,
    map: RwLock<HashMap<String, Vec<f64>>>,
    file: Mutex<Option<File>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) the cache file. Unreadable or malformed lines are
    /// skipped with a warning; the next lookup of that key misses.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut map = HashMap::new();
        if path.exists() {
            let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (i, line) in BufReader::new(f).split(b'\n').enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.iter().all(u8::is_ascii_whitespace) {
                    continue;
                }
                match serde_json::from_slice::<Line>(&line) {
                    Ok(l) if valid(&l) => {
                        map.insert(l.key, l.embedding);
                    }
                    _ => warn!("{}: skipping corrupt cache line {}", path.display(), i + 1),
                }
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        // terminate a torn final line so the next append starts clean
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.last().is_some_and(|&b| b != b'\n') {
            file.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        Ok(Self {
            path: Some(path),
            map: RwLock::new(map),
            file: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<Vec<f64>> {
        self.map.read().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: String, embedding: Vec<f64>) -> Result<()> {
        let mut file = self.file.lock().expect("cache lock");
        if let Some(f) = file.as_mut() {
            let mut line = serde_json::to_vec(&Line {
                key: key.clone(),
                embedding: embedding.clone(),
            })?;
            line.push(b'\n');
            let path = self.path.as_deref().unwrap_or(Path::new("<cache>"));
            f.write_all(&line).map_err(|e| Error::io(path, e))?;
            f.flush().map_err(|e| Error::io(path, e))?;
        }
        self.map.write().expect("cache lock").insert(key, embedding);
        Ok(())
    }
}

fn valid(l: &Line) -> bool {
    l.key.len() == 64 && !l.embedding.is_empty() && l.embedding.iter().all(|x| x.is_finite())
}
