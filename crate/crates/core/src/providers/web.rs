use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{http_client, normalize_query, with_retry, FixtureStore};
use crate::datamodel::Timestamp;
use crate::error::ProviderError;

/// Snippet content budget, in UTF-8 bytes.
pub const SNIPPET_MAX_BYTES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebSnippet {
    pub url: String,
    pub title: String,
    pub content: String,
    pub fetched_at: Timestamp,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WebResult {
    pub snippets: Vec<WebSnippet>,
    #[serde(default)]
    pub fixture_miss: bool,
}

pub trait WebProvider: Send + Sync {
    fn name(&self) -> &str;
    fn search(&self, query: &str) -> Result<WebResult, ProviderError>;
}

/// Longest prefix of at most `max_bytes` bytes ending on a char boundary.
pub fn truncate_utf8(s: &str, max_bytes: usize) -> &str {
    if s.len() <= max_bytes {
        return s;
    }
    let mut end = max_bytes;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    &s[..end]
}

/// Parses a Tavily `/search` response, ranked as returned. Entries with empty
/// content are dropped.
pub fn parse_tavily_response(body: &Value, fetched_at: Timestamp) -> Result<Vec<WebSnippet>, ProviderError> {
    let results =
        body.get("results").and_then(Value::as_array).ok_or_else(|| ProviderError::Malformed("missing `results`".into()))?;
    Ok(results
        .iter()
        .filter_map(|r| {
            let content = truncate_utf8(r.get("content").and_then(Value::as_str)?.trim(), SNIPPET_MAX_BYTES);
            (!content.is_empty()).then(|| WebSnippet {
                url: r.get("url").and_then(Value::as_str).unwrap_or("").to_string(),
                title: r.get("title").and_then(Value::as_str).unwrap_or("").to_string(),
                content: content.to_string(),
                fetched_at,
            })
        })
        .collect())
}

/// Tavily search (`IOTASE_WEB_API_KEY`, optional `IOTASE_WEB_BASE_URL`).
pub struct TavilySearch {
    client: reqwest::blocking::Client,
    url: String,
    api_key: String,
    max_results: usize,
}

impl TavilySearch {
    pub fn new(base_url: &str, api_key: String) -> Result<Self, ProviderError> {
        Ok(Self {
            client: http_client(Duration::from_secs(8))?,
            url: format!("{}/search", base_url.trim_end_matches('/')),
            api_key,
            max_results: 5,
        })
    }

    pub fn from_env() -> Result<Self, ProviderError> {
        let key = std::env::var("IOTASE_WEB_API_KEY")
            .map_err(|_| ProviderError::InvalidRequest("IOTASE_WEB_API_KEY is not set".into()))?;
        let base = std::env::var("IOTASE_WEB_BASE_URL").unwrap_or_else(|_| "https://api.tavily.com".into());
        Self::new(&base, key)
    }
}

impl WebProvider for TavilySearch {
    fn name(&self) -> &str {
        "tavily"
    }

    fn search(&self, query: &str) -> Result<WebResult, ProviderError> {
        if query.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("empty query".into()));
        }
        let body = json!({ "api_key": self.api_key, "query": query, "max_results": self.max_results });
        with_retry(2, || {
            let v = crate::error::post_json(&self.client, &self.url, None, &body)?;
            Ok(WebResult { snippets: parse_tavily_response(&v, chrono::Utc::now())?, fixture_miss: false })
        })
    }
}

#[derive(Serialize, Deserialize)]
struct WebFixture {
    query: String,
    snippets: Vec<WebSnippet>,
}

pub struct FixtureWeb {
    store: FixtureStore,
    live: Option<Box<dyn WebProvider>>,
    record: bool,
}

impl FixtureWeb {
    pub fn new(store: FixtureStore) -> Self {
        Self { store, live: None, record: false }
    }

    pub fn recording(store: FixtureStore, live: Box<dyn WebProvider>) -> Self {
        Self { store, live: Some(live), record: true }
    }

    pub fn save(&self, query: &str, snippets: &[WebSnippet]) -> Result<(), ProviderError> {
        let key = normalize_query(query);
        self.store.write("web", &key, &WebFixture { query: key.clone(), snippets: snippets.to_vec() }).map(|_| ())
    }
}

impl WebProvider for FixtureWeb {
    fn name(&self) -> &str {
        "fixture"
    }

    fn search(&self, query: &str) -> Result<WebResult, ProviderError> {
        let key = normalize_query(query);
        if key.is_empty() {
            return Err(ProviderError::InvalidRequest("empty query".into()));
        }
        if let Some(f) = self.store.read::<WebFixture>("web", &key)? {
            return Ok(WebResult { snippets: f.snippets, fixture_miss: false });
        }
        match (&self.live, self.record) {
            (Some(live), true) => {
                let r = live.search(query)?;
                self.save(query, &r.snippets)?;
                Ok(r)
            }
            _ => Ok(WebResult { snippets: Vec::new(), fixture_miss: true }),
        }
    }
}
