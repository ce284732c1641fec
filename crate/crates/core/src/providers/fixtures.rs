use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::ProviderError;

/// Lowercase, single-spaced, without trailing `?`, `.` or `!`.
pub fn normalize_query(q: &str) -> String {
    let joined = q.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    joined.trim_end_matches(['?', '.', '!']).trim_end().to_string()
}

/// Content-addressed fixture files: `<root>/<kind>/<sha256(key)>.json`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureStore {
    root: PathBuf,
}

impl FixtureStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// The fixtures bundled with this crate.
    pub fn bundled() -> Self {
        Self::new(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures"))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, kind: &str, key: &str) -> PathBuf {
        self.root.join(kind).join(format!("{}.json", hex::encode(Sha256::digest(key.as_bytes()))))
    }

    /// `Ok(None)` when no fixture exists for the key.
    pub fn read<T: DeserializeOwned>(&self, kind: &str, key: &str) -> Result<Option<T>, ProviderError> {
        let path = self.path_for(kind, key);
        match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| ProviderError::Malformed(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(ProviderError::Unavailable(format!("{}: {e}", path.display()))),
        }
    }

    pub fn write<T: Serialize>(&self, kind: &str, key: &str, value: &T) -> Result<PathBuf, ProviderError> {
        let path = self.path_for(kind, key);
        let io = |e: std::io::Error| ProviderError::Unavailable(format!("{}: {e}", path.display()));
        std::fs::create_dir_all(path.parent().expect("kind directory")).map_err(io)?;
        let body = serde_json::to_vec_pretty(value).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        std::fs::write(&path, body).map_err(io)?;
        Ok(path)
    }
}
