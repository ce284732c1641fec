use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbedError, Embedder, ProviderInfo};
use crate::error::ProviderError;

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    vector: Vec<f64>,
}

/// Append-only NDJSON file of vectors keyed by `provider:sha256(text)`.
pub struct EmbeddingCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, Vec<f64>>>,
    writer: Mutex<Option<File>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self { path: None, entries: RwLock::new(HashMap::new()), writer: Mutex::new(None) }
    }

    /// Loads existing entries; unreadable lines are skipped.
    pub fn open(path: &Path) -> Result<Self, EmbedError> {
        let io = |e: std::io::Error| EmbedError::Provider(ProviderError::Unavailable(format!("{}: {e}", path.display())));
        let mut entries = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path).map_err(io)?).lines() {
                if let Ok(l) = serde_json::from_str::<CacheLine>(&line.map_err(io)?) {
                    entries.insert(l.key, l.vector);
                }
            }
        } else if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(Self { path: Some(path.to_path_buf()), entries: RwLock::new(entries), writer: Mutex::new(Some(file)) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn key(provider: &str, text: &str) -> String {
        format!("{provider}:{}", hex::encode(Sha256::digest(text.as_bytes())))
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<Vec<f64>> {
        self.entries.read().get(key).cloned()
    }

    pub fn insert(&self, key: String, vector: Vec<f64>) {
        if let Some(f) = self.writer.lock().as_mut() {
            let line = serde_json::to_string(&CacheLine { key: key.clone(), vector: vector.clone() }).expect("finite floats");
            if let Err(e) = writeln!(f, "{line}") {
                tracing::warn!(error = %e, "embedding cache write failed");
            }
        }
        self.entries.write().insert(key, vector);
    }
}

pub struct CachedEmbedder {
    inner: Arc<dyn Embedder>,
    cache: EmbeddingCache,
}

impl CachedEmbedder {
    pub fn new(inner: Arc<dyn Embedder>, cache: EmbeddingCache) -> Self {
        Self { inner, cache }
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }
}

impl Embedder for CachedEmbedder {
    fn info(&self) -> ProviderInfo {
        self.inner.info()
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let key = EmbeddingCache::key(&self.inner.info().name, text);
        if let Some(v) = self.cache.get(&key) {
            return Ok(v);
        }
        let v = self.inner.embed_text(text)?;
        self.cache.insert(key, v.clone());
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::hashed_embedder;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting(AtomicUsize);

    impl Embedder for Counting {
        fn info(&self) -> ProviderInfo {
            ProviderInfo { name: "counting".into(), dimension: 2, deterministic: true }
        }
        fn embed_text(&self, _: &str) -> Result<Vec<f64>, EmbedError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(vec![1.0, 0.0])
        }
    }

    #[test]
    fn hits_skip_the_provider_and_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache/embeddings.ndjson");
        let inner = Arc::new(Counting(AtomicUsize::new(0)));
        let cached = CachedEmbedder::new(inner.clone(), EmbeddingCache::open(&path).unwrap());
        cached.embed_text("dog park").unwrap();
        cached.embed_text("dog park").unwrap();
        assert_eq!(inner.0.load(Ordering::SeqCst), 1);
        drop(cached);
        let reopened = EmbeddingCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 1);
        assert_eq!(reopened.get(&EmbeddingCache::key("counting", "dog park")), Some(vec![1.0, 0.0]));
    }

    #[test]
    fn cached_vectors_match_the_provider() {
        let inner: Arc<dyn Embedder> = Arc::new(hashed_embedder());
        let cached = CachedEmbedder::new(inner.clone(), EmbeddingCache::in_memory());
        let a = cached.embed_text("gas station").unwrap();
        assert_eq!(a, cached.embed_text("gas station").unwrap());
        assert_eq!(a, inner.embed_text("gas station").unwrap());
    }
}
