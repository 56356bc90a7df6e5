//! Model gateway: a uniform chat-completion and embedding interface with two
//! backends.
//!
//! * `http` speaks the common chat-completions / embeddings wire protocol.
//! * `scripted` is a deterministic offline stand-in. It either replays a fixed
//!   list of responses (one cursor per [`Session`]) or derives text from a
//!   seed and the request contents, and embeds text with a hashed
//!   bag-of-tokens projection.
//!
//! A [`Gateway`] is shared by every dialogue of a run; each dialogue opens its
//! own [`Session`] so scripted cursors never leak between dialogues. Call
//! counts are tallied in a shared [`Telemetry`].

mod http;
pub mod scripted;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use self::http::HttpBackend;

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_TOKENS: u32 = 256;
pub const DEFAULT_EMBEDDING_DIM: usize = 256;
/// Retries after the first attempt, transport failures only.
pub const HTTP_MAX_RETRIES: u32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("environment variable {0} holding the API key is not set")]
    MissingApiKey(String),
    #[error("transport failure talking to {url}: {message}")]
    Transport { url: String, message: String },
    #[error("endpoint {url} rejected the request with status {status}: {body}")]
    Status { url: String, status: u16, body: String },
    #[error("malformed response from {url}: {message}")]
    Decode { url: String, message: String },
    #[error("scripted backend exhausted after {consumed} responses")]
    ScriptExhausted { consumed: usize },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("model returned an empty completion")]
    EmptyCompletion,
    #[error("embedding is degenerate: {0}")]
    DegenerateEmbedding(String),
}

impl GatewayError {
    /// Transport-level failures are the only ones worth retrying.
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Transport { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

impl Default for Sampling {
    fn default() -> Self {
        Self { temperature: DEFAULT_TEMPERATURE, max_tokens: DEFAULT_MAX_TOKENS }
    }
}

impl Sampling {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(format!("temperature must be a finite number >= 0, got {}", self.temperature));
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be positive".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub messages: Vec<ChatMessage>,
    pub sampling: Sampling,
}

impl ChatRequest {
    pub fn new(system_prompt: impl Into<String>, user: impl Into<String>, sampling: Sampling) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            messages: vec![ChatMessage::user(user)],
            sampling,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub backend_id: String,
    pub usage: Option<Usage>,
}

/// A finite, non-empty embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, GatewayError> {
        if values.is_empty() {
            return Err(GatewayError::DegenerateEmbedding("zero-length vector".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GatewayError::DegenerateEmbedding(format!("non-finite value at position {i}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Scripted,
}

/// Backend selection and connection settings. The API key itself is never
/// stored here; only the name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_model_name")]
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
}

fn default_model_name() -> String {
    "scripted".to_string()
}

fn default_embedding_dim() -> usize {
    DEFAULT_EMBEDDING_DIM
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_backoff_ms() -> u64 {
    500
}

impl BackendConfig {
    /// Seed-driven scripted backend.
    pub fn scripted_seeded(seed: u64) -> Self {
        Self {
            kind: BackendKind::Scripted,
            endpoint_url: None,
            api_key_env: None,
            model_name: default_model_name(),
            embedding_model: None,
            script: None,
            seed: Some(seed),
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            timeout_secs: default_timeout_secs(),
            retry_backoff_ms: default_backoff_ms(),
        }
    }

    /// Scripted backend replaying `script` in order, once per session.
    pub fn scripted<I, S>(script: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: Some(script.into_iter().map(Into::into).collect()),
            seed: None,
            ..Self::scripted_seeded(0)
        }
    }

    pub fn http(endpoint_url: impl Into<String>, model_name: impl Into<String>, api_key_env: Option<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint_url: Some(endpoint_url.into()),
            api_key_env,
            model_name: model_name.into(),
            seed: None,
            ..Self::scripted_seeded(0)
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, GatewayError> {
        let config: Self = toml::from_str(s).map_err(|e| GatewayError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.kind {
            BackendKind::Http => {
                let url = self.endpoint_url.as_deref().unwrap_or_default();
                if url.trim().is_empty() {
                    return Err(GatewayError::InvalidConfig("http backend requires endpoint_url".into()));
                }
                if !(url.starts_with("http://") || url.starts_with("https://")) {
                    return Err(GatewayError::InvalidConfig(format!("endpoint_url {url:?} is not an http(s) URL")));
                }
            }
            BackendKind::Scripted => {
                if self.script.is_none() && self.seed.is_none() {
                    return Err(GatewayError::InvalidConfig("scripted backend requires script or seed".into()));
                }
            }
        }
        if self.embedding_dim == 0 {
            return Err(GatewayError::InvalidConfig("embedding_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn backend_id(&self) -> String {
        match self.kind {
            BackendKind::Http => format!("http:{}", self.model_name),
            BackendKind::Scripted => "scripted".to_string(),
        }
    }
}

/// Anything that can turn text into an embedding.
pub trait Embedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError>;
}

impl<F> Embedder for F
where
    F: Fn(&str) -> Result<EmbeddingVector, GatewayError>,
{
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        self(text)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TelemetrySnapshot {
    pub chat_calls: u64,
    pub embed_calls: u64,
    pub retrievals: u64,
}

/// Shared call counters, optionally capturing every chat request.
#[derive(Debug, Default)]
pub struct Telemetry {
    chat_calls: AtomicU64,
    embed_calls: AtomicU64,
    retrievals: AtomicU64,
    recorded: Option<Mutex<Vec<ChatRequest>>>,
}

impl Telemetry {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Counters plus a log of every chat request issued.
    pub fn recording() -> Arc<Self> {
        Arc::new(Self { recorded: Some(Mutex::new(Vec::new())), ..Self::default() })
    }

    pub fn record_retrieval(&self) {
        self.retrievals.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> TelemetrySnapshot {
        TelemetrySnapshot {
            chat_calls: self.chat_calls.load(Ordering::Relaxed),
            embed_calls: self.embed_calls.load(Ordering::Relaxed),
            retrievals: self.retrievals.load(Ordering::Relaxed),
        }
    }

    pub fn recorded_requests(&self) -> Vec<ChatRequest> {
        self.recorded
            .as_ref()
            .map(|log| log.lock().expect("telemetry log poisoned").clone())
            .unwrap_or_default()
    }

    fn on_chat(&self, request: &ChatRequest) {
        self.chat_calls.fetch_add(1, Ordering::Relaxed);
        if let Some(log) = &self.recorded {
            log.lock().expect("telemetry log poisoned").push(request.clone());
        }
    }

    fn on_embed(&self) {
        self.embed_calls.fetch_add(1, Ordering::Relaxed);
    }
}

/// A configured backend shared across dialogues.
#[derive(Debug, Clone)]
pub struct Gateway {
    config: Arc<BackendConfig>,
    http: Option<HttpBackend>,
    telemetry: Arc<Telemetry>,
}

impl Gateway {
    pub fn new(config: BackendConfig) -> Result<Self, GatewayError> {
        Self::with_telemetry(config, Telemetry::new())
    }

    pub fn with_telemetry(config: BackendConfig, telemetry: Arc<Telemetry>) -> Result<Self, GatewayError> {
        config.validate()?;
        let http = match config.kind {
            BackendKind::Http => Some(HttpBackend::new(&config)),
            BackendKind::Scripted => None,
        };
        Ok(Self { config: Arc::new(config), http, telemetry })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn telemetry(&self) -> &Arc<Telemetry> {
        &self.telemetry
    }

    /// Same backend, counting into a different telemetry sink.
    pub fn rebind(&self, telemetry: Arc<Telemetry>) -> Self {
        Self { telemetry, ..self.clone() }
    }

    /// Open a per-dialogue session. `session_seed` only affects seed-derived
    /// scripted output.
    pub fn session(&self, session_seed: u64) -> Session {
        Session {
            config: Arc::clone(&self.config),
            http: self.http.clone(),
            telemetry: Arc::clone(&self.telemetry),
            session_seed,
            cursor: 0,
        }
    }
}

/// One dialogue's view of the gateway. Owns the scripted cursor.
#[derive(Debug)]
pub struct Session {
    config: Arc<BackendConfig>,
    http: Option<HttpBackend>,
    telemetry: Arc<Telemetry>,
    session_seed: u64,
    cursor: usize,
}

impl Session {
    pub fn is_scripted(&self) -> bool {
        self.config.kind == BackendKind::Scripted
    }

    pub fn telemetry(&self) -> &Telemetry {
        &self.telemetry
    }

    pub fn complete_chat(&mut self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.telemetry.on_chat(request);
        match &self.http {
            Some(http) => http.complete_chat(request),
            None => {
                let text = match &self.config.script {
                    Some(script) => {
                        let text = script
                            .get(self.cursor)
                            .cloned()
                            .ok_or(GatewayError::ScriptExhausted { consumed: self.cursor })?;
                        self.cursor += 1;
                        text
                    }
                    None => scripted::seeded_text(self.config.seed.unwrap_or(0), self.session_seed, request),
                };
                Ok(ChatResponse { text, backend_id: self.config.backend_id(), usage: None })
            }
        }
    }

    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyText);
        }
        self.telemetry.on_embed();
        let vector = match &self.http {
            Some(http) => http.embed_text(text)?,
            None => scripted::hash_bag_embedding(text, self.config.embedding_dim)?,
        };
        Ok(vector)
    }
}

impl Embedder for Session {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        self.embed_text(text)
    }
}

pub(crate) fn backoff_delay(base_ms: u64, retry: u32) -> Duration {
    Duration::from_millis(base_ms.saturating_mul(1u64 << retry.min(16)))
}
