//! Content-addressed on-disk cache.
//!
//! Entry layout: `{dir}/{key[0..2]}/{key}.bin`, holding a 64-hex SHA-256 of
//! the payload, a newline, then the payload. Entries are written to a
//! temporary file in the same directory and renamed into place, so readers
//! never observe a partial entry.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::RasterImage;

const DIGEST_HEX: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn builder(operation: &str) -> CacheKeyBuilder {
        let mut b = CacheKeyBuilder { hasher: Sha256::new() };
        b.field("op", operation.as_bytes());
        b
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Length-prefixed fields, so no two field sequences hash the same bytes.
pub struct CacheKeyBuilder {
    hasher: Sha256,
}

impl CacheKeyBuilder {
    fn field(&mut self, label: &str, data: &[u8]) {
        self.hasher.update((label.len() as u64).to_le_bytes());
        self.hasher.update(label.as_bytes());
        self.hasher.update((data.len() as u64).to_le_bytes());
        self.hasher.update(data);
    }

    pub fn bytes(mut self, label: &str, data: &[u8]) -> Self {
        self.field(label, data);
        self
    }

    pub fn text(self, label: &str, data: &str) -> Self {
        self.bytes(label, data.as_bytes())
    }

    /// Hashes the canonical JSON of `value`. Struct fields serialize in
    /// declaration order and maps must be ordered (`BTreeMap`).
    pub fn json<T: Serialize + ?Sized>(self, label: &str, value: &T) -> Self {
        let encoded = serde_json::to_vec(value).expect("cache key component serializes");
        self.bytes(label, &encoded)
    }

    pub fn image(self, label: &str, image: &RasterImage) -> Self {
        let (w, h) = image.dims();
        let mut data = Vec::with_capacity(8 + image.pixels().len());
        data.extend_from_slice(&w.to_le_bytes());
        data.extend_from_slice(&h.to_le_bytes());
        data.extend_from_slice(image.pixels());
        self.bytes(label, &data)
    }

    pub fn seed(self, seed: u64) -> Self {
        self.bytes("seed", &seed.to_le_bytes())
    }

    pub fn finish(self) -> CacheKey {
        CacheKey(hex::encode(self.hasher.finalize()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub corrupt: u64,
}

#[derive(Debug)]
pub struct Cache {
    dir: PathBuf,
    hits: AtomicU64,
    misses: AtomicU64,
    corrupt: AtomicU64,
    in_flight: Mutex<HashMap<CacheKey, Arc<Mutex<()>>>>,
}

impl Cache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            corrupt: AtomicU64::new(0),
            in_flight: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(&key.0[..2]).join(format!("{}.bin", key.0))
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            corrupt: self.corrupt.load(Ordering::Relaxed),
        }
    }

    /// Verified payload, or `None` when absent or corrupt.
    pub fn get(&self, key: &CacheKey) -> Option<Vec<u8>> {
        let path = self.path_for(key);
        let data = std::fs::read(&path).ok()?;
        if data.len() > DIGEST_HEX && data[DIGEST_HEX] == b'\n' {
            let (head, payload) = (&data[..DIGEST_HEX], &data[DIGEST_HEX + 1..]);
            if head == hex::encode(Sha256::digest(payload)).as_bytes() {
                return Some(payload.to_vec());
            }
        }
        log::warn!("cache entry {} is corrupt; recomputing", path.display());
        self.corrupt.fetch_add(1, Ordering::Relaxed);
        None
    }

    pub fn put(&self, key: &CacheKey, payload: &[u8]) -> Result<()> {
        let path = self.path_for(key);
        let parent = path.parent().expect("entry has a parent directory");
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| Error::io(parent, e))?;
        tmp.write_all(hex::encode(Sha256::digest(payload)).as_bytes())
            .and_then(|_| tmp.write_all(b"\n"))
            .and_then(|_| tmp.write_all(payload))
            .and_then(|_| tmp.flush())
            .map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        Ok(())
    }

    /// Returns the cached payload for `key`, running `producer` and
    /// persisting its output on a miss. Concurrent callers with the same key
    /// in this process wait for the first producer instead of duplicating it.
    pub fn get_or_compute<F>(&self, key: &CacheKey, producer: F) -> Result<(Vec<u8>, bool)>
    where
        F: FnOnce() -> Result<Vec<u8>>,
    {
        let slot = {
            let mut map = self.in_flight.lock().expect("cache lock poisoned");
            map.entry(key.clone()).or_default().clone()
        };
        let _guard = slot.lock().expect("cache slot poisoned");
        if let Some(hit) = self.get(key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok((hit, true));
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let value = producer()?;
        self.put(key, &value)?;
        Ok((value, false))
    }
}
