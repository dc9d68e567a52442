//! Chat-completions style HTTP backend.

use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::{json, Value};

use super::ledger::estimate_tokens;
use super::{Backend, BackendError, ChatRequest, ChatResponse, EmbeddingResponse};

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    /// Full URL of the chat completions endpoint.
    pub chat_url: String,
    /// Full URL of the embeddings endpoint, if the provider has one.
    pub embeddings_url: Option<String>,
    pub api_key: Option<String>,
    /// Model name sent to the provider. Defaults to the request's model id.
    pub remote_model: Option<String>,
    pub timeout: Duration,
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

#[derive(Deserialize)]
struct ChatCompletion {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingList {
    data: Vec<EmbeddingItem>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f32>,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Self { config, agent }
    }

    fn post(&self, url: &str, body: &Value) -> Result<Value, BackendError> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(classify)?;
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| BackendError::Transient(format!("unreadable response body: {e}")))
    }

    fn model_name<'a>(&'a self, model_id: &'a str) -> &'a str {
        self.config.remote_model.as_deref().unwrap_or(model_id)
    }
}

fn classify(err: ureq::Error) -> BackendError {
    match err {
        ureq::Error::StatusCode(code) if code == 408 || code == 429 || code >= 500 => {
            BackendError::Transient(format!("HTTP {code}"))
        }
        ureq::Error::StatusCode(code) => BackendError::Fatal(format!("HTTP {code}")),
        ureq::Error::Timeout(_)
        | ureq::Error::Io(_)
        | ureq::Error::ConnectionFailed
        | ureq::Error::HostNotFound => BackendError::Transient(err.to_string()),
        other => BackendError::Fatal(other.to_string()),
    }
}

pub(crate) fn chat_body(model: &str, request: &ChatRequest) -> Value {
    let mut messages = Vec::new();
    if let Some(system) = &request.system_text {
        messages.push(json!({"role": "system", "content": system}));
    }
    messages.push(json!({"role": "user", "content": request.user_text}));
    json!({
        "model": model,
        "messages": messages,
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
    })
}

impl Backend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let started = Instant::now();
        let body = chat_body(self.model_name(&request.model_id), request);
        let raw = self.post(&self.config.chat_url, &body)?;
        let parsed: ChatCompletion = serde_json::from_value(raw)
            .map_err(|e| BackendError::Transient(format!("malformed completion: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        let usage = parsed.usage;
        let prompt_tokens = usage
            .as_ref()
            .and_then(|u| u.prompt_tokens)
            .unwrap_or_else(|| {
                request.system_text.as_deref().map_or(0, estimate_tokens) + estimate_tokens(&request.user_text)
            });
        let completion_tokens = usage
            .as_ref()
            .and_then(|u| u.completion_tokens)
            .unwrap_or_else(|| estimate_tokens(&text));
        Ok(ChatResponse {
            text,
            prompt_tokens,
            completion_tokens,
            provider_latency_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn embed(&self, model_id: &str, texts: &[String]) -> Result<EmbeddingResponse, BackendError> {
        let url = self
            .config
            .embeddings_url
            .as_deref()
            .ok_or_else(|| BackendError::Fatal("no embeddings endpoint configured".into()))?;
        let body = json!({"model": self.model_name(model_id), "input": texts});
        let parsed: EmbeddingList = serde_json::from_value(self.post(url, &body)?)
            .map_err(|e| BackendError::Transient(format!("malformed embedding response: {e}")))?;
        if parsed.data.len() != texts.len() {
            return Err(BackendError::Fatal(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }
        let prompt_tokens = parsed
            .usage
            .and_then(|u| u.prompt_tokens)
            .unwrap_or_else(|| texts.iter().map(|t| estimate_tokens(t)).sum());
        Ok(EmbeddingResponse {
            vectors: parsed.data.into_iter().map(|d| d.embedding).collect(),
            prompt_tokens,
        })
    }
}
