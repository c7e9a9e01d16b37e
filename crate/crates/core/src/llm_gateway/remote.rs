//! Adapters for OpenAI-compatible HTTP endpoints.
//!
//! Chat: `POST {base_url}/chat/completions` with bearer auth and body
//! `{"model", "messages": [{"role": "user", "content": prompt}], "temperature",
//! "max_tokens"?}`; the reply text is `choices[0].message.content` and token
//! counts come from `usage.prompt_tokens` / `usage.completion_tokens`.
//!
//! Embeddings: `POST {base_url}/embeddings` with `{"model", "input": text}`;
//! the vector is `data[0].embedding`.

use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::{json, Value};

use super::{BackendReply, ChatBackend, ChatRequest, EmbedBackend, GatewayError, TokenUsage};

const BODY_EXCERPT: usize = 200;

fn excerpt(body: &str) -> String {
    body.chars().take(BODY_EXCERPT).collect()
}

fn classify_status(status: u16, body: &str) -> GatewayError {
    match status {
        401 | 403 => GatewayError::Auth(format!("HTTP {status}: {}", excerpt(body))),
        429 => GatewayError::RateLimited { attempts: 1 },
        500..=599 => GatewayError::ServerError {
            status,
            body: excerpt(body),
        },
        _ => GatewayError::ProviderRejected {
            status,
            body: excerpt(body),
        },
    }
}

#[derive(Debug, Clone)]
struct HttpEndpoint {
    client: Client,
    base_url: String,
    api_key: String,
}

impl HttpEndpoint {
    fn new(base_url: &str, api_key: String, timeout: Duration) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(format!("HTTP client: {e}")))?;
        Ok(Self {
            client,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
        })
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let response = self
            .client
            .post(format!("{}/{path}", self.base_url))
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &text));
        }
        serde_json::from_str(&text)
            .map_err(|e| GatewayError::InvalidResponse(format!("{e}: {}", excerpt(&text))))
    }
}

#[derive(Debug, Clone)]
pub struct OpenAiCompatibleChat {
    endpoint: HttpEndpoint,
}

impl OpenAiCompatibleChat {
    pub fn new(base_url: &str, api_key: String, timeout: Duration) -> Result<Self, GatewayError> {
        Ok(Self {
            endpoint: HttpEndpoint::new(base_url, api_key, timeout)?,
        })
    }
}

impl ChatBackend for OpenAiCompatibleChat {
    fn chat(&self, req: &ChatRequest) -> Result<BackendReply, GatewayError> {
        let mut body = json!({
            "model": req.model_id,
            "messages": [{"role": "user", "content": req.prompt_text}],
            "temperature": req.temperature,
        });
        if let Some(max) = req.max_output_tokens {
            body["max_tokens"] = json!(max);
        }
        let reply = self.endpoint.post("chat/completions", &body)?;
        let text = reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::InvalidResponse("missing choices[0].message.content".into()))?
            .to_string();
        let usage = reply.get("usage").map(|u| TokenUsage {
            prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64),
            completion_tokens: u.get("completion_tokens").and_then(Value::as_u64),
        });
        Ok(BackendReply { text, usage })
    }
}

#[derive(Debug, Clone)]
pub struct OpenAiCompatibleEmbeddings {
    endpoint: HttpEndpoint,
}

impl OpenAiCompatibleEmbeddings {
    pub fn new(base_url: &str, api_key: String, timeout: Duration) -> Result<Self, GatewayError> {
        Ok(Self {
            endpoint: HttpEndpoint::new(base_url, api_key, timeout)?,
        })
    }
}

impl EmbedBackend for OpenAiCompatibleEmbeddings {
    fn embed(&self, text: &str, model_id: &str) -> Result<Vec<f64>, GatewayError> {
        let reply = self
            .endpoint
            .post("embeddings", &json!({"model": model_id, "input": text}))?;
        reply
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .and_then(|xs| xs.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
            .ok_or_else(|| GatewayError::InvalidResponse("missing data[0].embedding".into()))
    }
}
