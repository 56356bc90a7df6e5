//! Chat-completions / embeddings client over blocking HTTP.

use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{backoff_delay, BackendConfig, ChatRequest, ChatResponse, EmbeddingVector, GatewayError, Usage, HTTP_MAX_RETRIES};

#[derive(Debug, Clone)]
pub(crate) struct HttpBackend {
    agent: ureq::Agent,
    base_url: String,
    model: String,
    embedding_model: String,
    api_key_env: Option<String>,
    backoff_ms: u64,
    backend_id: String,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<UsageBody>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct UsageBody {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct EmbeddingBody {
    data: Vec<EmbeddingEntry>,
}

#[derive(Deserialize)]
struct EmbeddingEntry {
    embedding: Vec<f64>,
}

impl HttpBackend {
    pub(crate) fn new(config: &BackendConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build()
            .into();
        Self {
            agent,
            base_url: config.endpoint_url.clone().unwrap_or_default().trim_end_matches('/').to_string(),
            model: config.model_name.clone(),
            embedding_model: config.embedding_model.clone().unwrap_or_else(|| config.model_name.clone()),
            api_key_env: config.api_key_env.clone(),
            backoff_ms: config.retry_backoff_ms,
            backend_id: config.backend_id(),
        }
    }

    fn api_key(&self) -> Result<Option<String>, GatewayError> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| GatewayError::MissingApiKey(var.clone())),
        }
    }

    fn post_once(&self, url: &str, body: &Value, key: Option<&str>) -> Result<String, GatewayError> {
        let mut request = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(body).map_err(|e| match e {
            ureq::Error::Json(e) => GatewayError::Decode { url: url.to_string(), message: e.to_string() },
            other => GatewayError::Transport { url: url.to_string(), message: other.to_string() },
        })?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::Transport { url: url.to_string(), message: e.to_string() })?;
        if !(200..300).contains(&status) {
            return Err(GatewayError::Status { url: url.to_string(), status, body: text });
        }
        Ok(text)
    }

    fn post(&self, path: &str, body: &Value) -> Result<String, GatewayError> {
        let key = self.api_key()?;
        let url = format!("{}/{}", self.base_url, path);
        let mut retry = 0;
        loop {
            match self.post_once(&url, body, key.as_deref()) {
                Err(e) if e.is_retryable() && retry < HTTP_MAX_RETRIES => {
                    thread::sleep(backoff_delay(self.backoff_ms, retry));
                    retry += 1;
                }
                other => return other,
            }
        }
    }

    pub(crate) fn complete_chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut messages = vec![json!({"role": "system", "content": request.system_prompt})];
        messages.extend(request.messages.iter().map(|m| json!({"role": m.role, "content": m.content})));
        let body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": request.sampling.temperature,
            "max_tokens": request.sampling.max_tokens,
        });
        let raw = self.post("chat/completions", &body)?;
        let url = format!("{}/chat/completions", self.base_url);
        let parsed: CompletionBody =
            serde_json::from_str(&raw).map_err(|e| GatewayError::Decode { url: url.clone(), message: e.to_string() })?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::Decode { url, message: "no choices[0].message.content".into() })?;
        Ok(ChatResponse {
            text,
            backend_id: self.backend_id.clone(),
            usage: parsed.usage.map(|u| Usage { prompt_tokens: u.prompt_tokens, completion_tokens: u.completion_tokens }),
        })
    }

    pub(crate) fn embed_text(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        let body = json!({"model": self.embedding_model, "input": text});
        let raw = self.post("embeddings", &body)?;
        let url = format!("{}/embeddings", self.base_url);
        let parsed: EmbeddingBody =
            serde_json::from_str(&raw).map_err(|e| GatewayError::Decode { url: url.clone(), message: e.to_string() })?;
        let values = parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| GatewayError::Decode { url, message: "no data[0].embedding".into() })?;
        EmbeddingVector::new(values)
    }
}
