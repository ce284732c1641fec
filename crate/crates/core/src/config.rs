//! Runtime configuration. Sources layer as TOML file < `IOTASE_*`
//! environment < command-line flags; every key is listed in
//! `docs/configuration.md`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::AgentConfig;
use crate::embedder::EmbedderConfig;
use crate::rag::SearchConfig;
use crate::vector_index::IndexParams;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_TRACE_CAPACITY: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub listen: String,
    /// Dataset directory (manifest plus per-service NDJSON). Unset means the
    /// bundled demo dataset.
    pub data_dir: Option<PathBuf>,
    /// Index snapshot to load; rebuilt from the catalog when absent or stale.
    pub index_path: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
    /// Recorded provider responses. Unset means the bundled fixtures.
    pub fixtures_dir: Option<PathBuf>,
    pub trace_capacity: usize,
    pub embedder: EmbedderConfig,
    pub index: IndexParams,
    pub search: SearchConfig,
    pub agents: AgentConfig,
    pub providers: ProvidersConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            listen: DEFAULT_LISTEN.into(),
            data_dir: None,
            index_path: None,
            templates_dir: None,
            fixtures_dir: None,
            trace_capacity: DEFAULT_TRACE_CAPACITY,
            embedder: EmbedderConfig::default(),
            index: IndexParams::default(),
            search: SearchConfig::default(),
            agents: AgentConfig::default(),
            providers: ProvidersConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProvidersConfig {
    /// `mock` or `http`.
    pub llm: String,
    /// `fixture+synthetic`, `fixture`, `synthetic` or `ors`.
    pub routing: String,
    /// `fixture` or `google`.
    pub maps: String,
    /// `fixture` or `tavily`.
    pub web: String,
    /// Save live responses into the fixture directory.
    pub record: bool,
}

impl Default for ProvidersConfig {
    fn default() -> Self {
        Self {
            llm: "mock".into(),
            routing: "fixture+synthetic".into(),
            maps: "fixture".into(),
            web: "fixture".into(),
            record: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("{key}: cannot parse {value:?}")]
    Value { key: &'static str, value: String },
}

fn parsed<T: std::str::FromStr>(key: &'static str, value: String) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Value { key, value })
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        toml::from_str(&text).map_err(|source| ConfigError::Toml { path: path.into(), source })
    }

    /// File (if any), then the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    /// Overrides from `IOTASE_*` variables, looked up through `var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        let path = |k: &str| var(k).map(PathBuf::from);
        if let Some(v) = var("IOTASE_LISTEN") {
            self.listen = v;
        }
        if let Some(v) = path("IOTASE_DATA_DIR") {
            self.data_dir = Some(v);
        }
        if let Some(v) = path("IOTASE_INDEX_PATH") {
            self.index_path = Some(v);
        }
        if let Some(v) = path("IOTASE_TEMPLATES_DIR") {
            self.templates_dir = Some(v);
        }
        if let Some(v) = path("IOTASE_FIXTURES_DIR") {
            self.fixtures_dir = Some(v);
        }
        if let Some(v) = var("IOTASE_EMBEDDER") {
            self.embedder.provider = v;
        }
        if let Some(v) = path("IOTASE_EMBED_CACHE") {
            self.embedder.cache_path = Some(v);
        }
        if let Some(v) = var("IOTASE_LLM") {
            self.providers.llm = v;
        }
        if let Some(v) = var("IOTASE_ROUTING") {
            self.providers.routing = v;
        }
        if let Some(v) = var("IOTASE_MAPS") {
            self.providers.maps = v;
        }
        if let Some(v) = var("IOTASE_WEB") {
            self.providers.web = v;
        }
        if let Some(v) = var("IOTASE_RECORD") {
            self.providers.record = parsed("IOTASE_RECORD", v)?;
        }
        if let Some(v) = var("IOTASE_HOP_BUDGET") {
            self.agents.hop_budget = parsed("IOTASE_HOP_BUDGET", v)?;
        }
        if let Some(v) = var("IOTASE_SEED") {
            self.agents.seed = parsed("IOTASE_SEED", v)?;
        }
        if let Some(v) = var("IOTASE_TRACE_CAPACITY") {
            self.trace_capacity = parsed("IOTASE_TRACE_CAPACITY", v)?;
        }
        Ok(())
    }
}
