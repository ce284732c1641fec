use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{post_json, ProviderError};
use crate::providers::{http_client, with_retry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Classifier,
    Generator,
    Reviewer,
}

/// One completion call. `prompt` is what a hosted model sees; `payload`
/// carries the same slot values in structured form for offline providers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub role: AgentRole,
    pub prompt: String,
    pub payload: Value,
    pub seed: u64,
}

pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;
    /// Same request, same reply.
    fn deterministic(&self) -> bool;
    fn complete(&self, request: &LlmRequest) -> Result<String, ProviderError>;
}

/// OpenAI-compatible chat completions (`IOTASE_LLM_BASE_URL`,
/// `IOTASE_LLM_API_KEY`, `IOTASE_LLM_MODEL`).
pub struct HttpLlm {
    client: reqwest::blocking::Client,
    url: String,
    api_key: String,
    model: String,
}

pub const DEFAULT_LLM_MODEL: &str = "llama3-8b-8192";
pub const DEFAULT_LLM_BASE_URL: &str = "https://api.groq.com/openai/v1";

impl HttpLlm {
    pub fn new(base_url: &str, api_key: String, model: String) -> Result<Self, ProviderError> {
        Ok(Self {
            client: http_client(Duration::from_secs(30))?,
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            model,
        })
    }

    pub fn from_env() -> Result<Self, ProviderError> {
        let key = std::env::var("IOTASE_LLM_API_KEY")
            .map_err(|_| ProviderError::InvalidRequest("IOTASE_LLM_API_KEY is not set".into()))?;
        let base = std::env::var("IOTASE_LLM_BASE_URL").unwrap_or_else(|_| DEFAULT_LLM_BASE_URL.into());
        let model = std::env::var("IOTASE_LLM_MODEL").unwrap_or_else(|_| DEFAULT_LLM_MODEL.into());
        Self::new(&base, key, model)
    }
}

pub fn parse_chat_response(body: &Value) -> Result<String, ProviderError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ProviderError::Malformed("missing choices[0].message.content".into()))
}

impl LlmProvider for HttpLlm {
    fn name(&self) -> &str {
        &self.model
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn complete(&self, request: &LlmRequest) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": request.prompt }],
            "temperature": 0,
            "seed": request.seed,
        });
        with_retry(2, || parse_chat_response(&post_json(&self.client, &self.url, Some(&self.api_key), &body)?))
    }
}

/// The first balanced `{...}` object in free text, for models that wrap
/// their JSON in prose or code fences.
pub fn extract_json_object(text: &str) -> Option<Value> {
    let bytes = text.as_bytes();
    let mut start = 0;
    while let Some(off) = text[start..].find('{') {
        let open = start + off;
        let (mut depth, mut in_str, mut escaped) = (0usize, false, false);
        for (i, &b) in bytes.iter().enumerate().skip(open) {
            match (in_str, escaped, b) {
                (true, true, _) => escaped = false,
                (true, false, b'\\') => escaped = true,
                (true, false, b'"') => in_str = false,
                (false, _, b'"') => in_str = true,
                (false, _, b'{') => depth += 1,
                (false, _, b'}') => {
                    depth -= 1;
                    if depth == 0 {
                        if let Ok(v @ Value::Object(_)) = serde_json::from_str(&text[open..=i]) {
                            return Some(v);
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
        start = open + 1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_inside_prose() {
        let v = extract_json_object("Sure! ```json\n{\"route\": \"maps\", \"note\": \"a } brace\"}\n```").unwrap();
        assert_eq!(v["route"], "maps");
        assert!(extract_json_object("no json {here").is_none());
        assert_eq!(extract_json_object("{bad} then {\"ok\": 1}").unwrap()["ok"], 1);
    }

    #[test]
    fn chat_shape() {
        let body = json!({"choices": [{"message": {"role": "assistant", "content": "hi"}}]});
        assert_eq!(parse_chat_response(&body).unwrap(), "hi");
        assert!(matches!(parse_chat_response(&json!({})), Err(ProviderError::Malformed(_))));
    }
}
