use std::sync::OnceLock;
use std::time::Duration;

use serde_json::{json, Value};

use super::{combine_sentences, normalize, split_sentences, EmbedError, Embedder, EmbedderConfig, ProviderInfo};
use crate::error::{post_json, ProviderError};

/// OpenAI-compatible `/embeddings` adapter. Sentences are embedded in one
/// request, each normalized, then combined like the local pipeline does.
pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
    model: String,
    dimension: OnceLock<usize>,
}

impl RemoteEmbedder {
    pub fn new(base_url: &str, api_key: Option<String>, model: &str, dimension: Option<usize>) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(20))
            .build()
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        let dim = OnceLock::new();
        if let Some(d) = dimension {
            let _ = dim.set(d);
        }
        Ok(Self {
            client,
            url: format!("{}/embeddings", base_url.trim_end_matches('/')),
            api_key,
            model: model.to_string(),
            dimension: dim,
        })
    }

    /// Reads `IOTASE_EMBED_BASE_URL`, `IOTASE_EMBED_API_KEY` and
    /// `IOTASE_EMBED_MODEL`; config values win over the environment.
    pub fn from_env(cfg: &EmbedderConfig) -> Result<Self, EmbedError> {
        let base = cfg
            .base_url
            .clone()
            .or_else(|| std::env::var("IOTASE_EMBED_BASE_URL").ok())
            .ok_or_else(|| ProviderError::InvalidRequest("IOTASE_EMBED_BASE_URL is not set".into()))?;
        let model = cfg
            .model
            .clone()
            .or_else(|| std::env::var("IOTASE_EMBED_MODEL").ok())
            .unwrap_or_else(|| "text-embedding-3-small".into());
        Self::new(&base, std::env::var("IOTASE_EMBED_API_KEY").ok(), &model, cfg.dimension)
    }
}

/// Extracts `data[*].embedding` in `index` order.
pub fn parse_embedding_response(body: &Value, expected: usize) -> Result<Vec<Vec<f64>>, ProviderError> {
    let data = body
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| ProviderError::Malformed("missing `data` array".into()))?;
    let mut rows: Vec<(u64, Vec<f64>)> = Vec::with_capacity(data.len());
    for (pos, item) in data.iter().enumerate() {
        let idx = item.get("index").and_then(Value::as_u64).unwrap_or(pos as u64);
        let vec = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::Malformed("missing `embedding`".into()))?
            .iter()
            .map(|x| x.as_f64().filter(|f| f.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| ProviderError::Malformed("non-numeric embedding value".into()))?;
        rows.push((idx, vec));
    }
    if rows.len() != expected {
        return Err(ProviderError::Malformed(format!("expected {expected} embeddings, got {}", rows.len())));
    }
    rows.sort_by_key(|(i, _)| *i);
    let d = rows.first().map_or(0, |(_, v)| v.len());
    if d == 0 || rows.iter().any(|(_, v)| v.len() != d) {
        return Err(ProviderError::Malformed("inconsistent embedding dimensions".into()));
    }
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}

impl Embedder for RemoteEmbedder {
    fn info(&self) -> ProviderInfo {
        ProviderInfo {
            name: format!("remote:{}", self.model),
            dimension: self.dimension.get().copied().unwrap_or(0),
            deterministic: false,
        }
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let sentences = split_sentences(text);
        if sentences.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let body = json!({ "model": self.model, "input": sentences });
        let resp = post_json(&self.client, &self.url, self.api_key.as_deref(), &body)?;
        let rows = parse_embedding_response(&resp, sentences.len())?;
        let d = *self.dimension.get_or_init(|| rows[0].len());
        if rows[0].len() != d {
            return Err(EmbedError::Shape(format!("provider returned d={}, expected {d}", rows[0].len())));
        }
        let units = rows.iter().map(|r| normalize(r)).collect::<Result<Vec<_>, _>>()?;
        combine_sentences(&units)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_recorded_payload_in_index_order() {
        let body = json!({
            "object": "list",
            "data": [
                {"object": "embedding", "index": 1, "embedding": [0.0, 1.0]},
                {"object": "embedding", "index": 0, "embedding": [1.0, 0.0]}
            ],
            "model": "text-embedding-3-small"
        });
        let rows = parse_embedding_response(&body, 2).unwrap();
        assert_eq!(rows, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn rejects_malformed_payloads() {
        assert!(parse_embedding_response(&json!({"error": "x"}), 1).is_err());
        assert!(parse_embedding_response(&json!({"data": [{"embedding": ["a"]}]}), 1).is_err());
        assert!(parse_embedding_response(&json!({"data": [{"embedding": [1.0]}, {"embedding": [1.0, 2.0]}]}), 2).is_err());
        assert!(parse_embedding_response(&json!({"data": [{"embedding": [1.0]}]}), 2).is_err());
    }

    #[test]
    fn unreachable_endpoint_is_typed() {
        let e = RemoteEmbedder::new("http://127.0.0.1:9", None, "m", None).unwrap();
        match e.embed_text("dog park") {
            Err(EmbedError::Provider(ProviderError::Unavailable(_) | ProviderError::Timeout(_))) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
