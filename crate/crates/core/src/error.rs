use serde::{Deserialize, Serialize};

/// Failure taxonomy shared by every external provider (LLM, embeddings,
/// routing, maps, web search).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum ProviderError {
    #[error("timeout: {0}")]
    Timeout(String),
    #[error("quota exceeded: {0}")]
    Quota(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("unavailable: {0}")]
    Unavailable(String),
    /// The request itself was unusable (bad key, unknown model, rejected input).
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl ProviderError {
    /// Errors worth one more attempt.
    pub fn is_transient(&self) -> bool {
        matches!(self, ProviderError::Timeout(_) | ProviderError::Unavailable(_))
    }

    pub fn from_status(status: u16, body: &str) -> Self {
        let snippet: String = body.chars().take(200).collect();
        match status {
            408 | 504 => ProviderError::Timeout(format!("http {status}")),
            429 => ProviderError::Quota(snippet),
            400..=499 => ProviderError::InvalidRequest(format!("http {status}: {snippet}")),
            _ => ProviderError::Unavailable(format!("http {status}: {snippet}")),
        }
    }

    pub fn from_transport(err: &reqwest::Error) -> Self {
        if err.is_timeout() {
            ProviderError::Timeout(err.to_string())
        } else if err.is_decode() {
            ProviderError::Malformed(err.to_string())
        } else {
            ProviderError::Unavailable(err.to_string())
        }
    }
}

/// Blocking JSON POST shared by the HTTP adapters.
pub(crate) fn post_json(
    client: &reqwest::blocking::Client,
    url: &str,
    bearer: Option<&str>,
    body: &serde_json::Value,
) -> Result<serde_json::Value, ProviderError> {
    let mut req = client.post(url).json(body);
    if let Some(key) = bearer {
        req = req.bearer_auth(key);
    }
    let resp = req.send().map_err(|e| ProviderError::from_transport(&e))?;
    let status = resp.status().as_u16();
    let text = resp.text().map_err(|e| ProviderError::from_transport(&e))?;
    if !(200..300).contains(&status) {
        return Err(ProviderError::from_status(status, &text));
    }
    serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        assert!(matches!(ProviderError::from_status(429, "slow down"), ProviderError::Quota(_)));
        assert!(matches!(ProviderError::from_status(401, ""), ProviderError::InvalidRequest(_)));
        assert!(matches!(ProviderError::from_status(503, ""), ProviderError::Unavailable(_)));
        assert!(ProviderError::from_status(504, "").is_transient());
        assert!(!ProviderError::from_status(429, "").is_transient());
    }
}
