//! Content-addressed on-disk response cache.
//!
//! One file per entry, named by the hex key. The file starts with a single
//! JSON header line followed by the raw response bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::jsonl::write_atomic;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn chat(model_id: &str, temperature: f64, prompt: &str) -> Self {
        Self::digest(&["chat", model_id, &format!("{temperature:?}"), prompt])
    }

    pub fn embedding(model_id: &str, text: &str) -> Self {
        Self::digest(&["embed", model_id, text])
    }

    fn digest(parts: &[&str]) -> Self {
        let encoded = serde_json::to_vec(parts).expect("string slices serialise");
        CacheKey(crate::sha256_hex(&encoded))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub key: String,
    pub kind: String,
    pub model_id: String,
    pub created_at: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub header: CacheHeader,
    pub value: String,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(key.as_str())
    }

    pub fn load(&self, key: &CacheKey) -> Option<CacheEntry> {
        let bytes = fs::read(self.path(key)).ok()?;
        let split = bytes.iter().position(|&b| b == b'\n')?;
        let header: CacheHeader = match serde_json::from_slice(&bytes[..split]) {
            Ok(h) => h,
            Err(e) => {
                log::warn!("ignoring corrupt cache entry {}: {e}", key.as_str());
                return None;
            }
        };
        let body = &bytes[split + 1..];
        if header.key != key.as_str() || header.len != body.len() {
            log::warn!("ignoring mismatched cache entry {}", key.as_str());
            return None;
        }
        let value = String::from_utf8(body.to_vec()).ok()?;
        Some(CacheEntry { header, value })
    }

    pub fn store(&self, key: &CacheKey, kind: &str, model_id: &str, value: &str) -> std::io::Result<()> {
        let header = CacheHeader {
            key: key.as_str().to_string(),
            kind: kind.to_string(),
            model_id: model_id.to_string(),
            created_at: chrono::Utc::now().to_rfc3339(),
            len: value.len(),
        };
        let mut bytes = serde_json::to_vec(&header).expect("header serialises");
        bytes.push(b'\n');
        bytes.extend_from_slice(value.as_bytes());
        write_atomic(&self.path(key), &bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn keys_are_pure_and_distinct() {
        assert_eq!(CacheKey::chat("m", 0.0, "p"), CacheKey::chat("m", 0.0, "p"));
        assert_ne!(CacheKey::chat("m", 0.0, "p"), CacheKey::chat("m", 0.5, "p"));
        assert_ne!(CacheKey::chat("m", 0.0, "p"), CacheKey::chat("n", 0.0, "p"));
        assert_ne!(CacheKey::chat("m", 0.0, "p"), CacheKey::embedding("m", "p"));
        // field boundaries are part of the key
        assert_ne!(CacheKey::embedding("ab", "c"), CacheKey::embedding("a", "bc"));
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let key = CacheKey::chat("m", 0.0, "p");
        fs::write(dir.path().join(key.as_str()), b"garbage").unwrap();
        assert!(cache.load(&key).is_none());
    }

    proptest! {
        #[test]
        fn store_then_load(model in "[a-z0-9-]{1,12}", prompt in ".{0,64}", value in ".{0,256}") {
            let dir = tempfile::tempdir().unwrap();
            let cache = ResponseCache::open(dir.path()).unwrap();
            let key = CacheKey::chat(&model, 0.0, &prompt);
            prop_assert!(cache.load(&key).is_none());
            cache.store(&key, "chat", &model, &value).unwrap();
            let entry = cache.load(&key).unwrap();
            prop_assert_eq!(entry.value, value);
            prop_assert_eq!(entry.header.model_id, model);
        }

        #[test]
        fn keys_collide_only_on_identical_inputs(a in ".{0,16}", b in ".{0,16}") {
            prop_assert_eq!(CacheKey::chat("m", 0.0, &a) == CacheKey::chat("m", 0.0, &b), a == b);
        }
    }
}
