use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    check_embeddings, ChatExchange, DecodeMode, EmbeddingVector, GenerationParams, LlmBackend,
    LlmError,
};

/// Environment variable consulted for the bearer token when the config leaves it empty.
pub const API_KEY_ENV: &str = "RCA_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendConfig {
    /// Base URL up to and including the version segment, e.g. `http://localhost:8000/v1`.
    pub endpoint: String,
    pub model: String,
    pub embedding_model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub retry_backoff_ms: u64,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1".to_string(),
            model: "vicuna-13b-v1.5-16k".to_string(),
            embedding_model: "thenlper/gte-large".to_string(),
            api_key: None,
            timeout_secs: 300,
            max_attempts: 3,
            retry_backoff_ms: 500,
        }
    }
}

impl HttpBackendConfig {
    /// Fills `api_key` from [`API_KEY_ENV`] when unset.
    pub fn with_env_key(mut self) -> Self {
        if self.api_key.is_none() {
            self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        }
        self
    }
}

/// Blocking client for OpenAI-compatible `/chat/completions` and `/embeddings`.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, LlmError> {
        if config.max_attempts == 0 {
            return Err(LlmError::Config("max_attempts must be at least 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, LlmError> {
        let url = self.url(path);
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts {
            let mut req = self.client.post(&url).json(body);
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp.json::<Value>().map_err(|e| {
                            LlmError::Protocol(format!("invalid JSON from {url}: {e}"))
                        });
                    }
                    let text = resp.text().unwrap_or_default();
                    if status.is_server_error() || status.as_u16() == 429 {
                        last = format!("HTTP {status} from {url}: {}", truncate(&text, 200));
                    } else {
                        return Err(LlmError::Protocol(format!(
                            "HTTP {status} from {url}: {}",
                            truncate(&text, 200)
                        )));
                    }
                }
                Err(e) => last = format!("request to {url} failed: {e}"),
            }
            log::debug!("attempt {attempt} failed: {last}");
            if attempt < self.config.max_attempts {
                thread::sleep(Duration::from_millis(
                    self.config.retry_backoff_ms * u64::from(attempt),
                ));
            }
        }
        Err(LlmError::Transport {
            attempts: self.config.max_attempts,
            message: last,
        })
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

pub(crate) fn chat_request_body(
    model: &str,
    exchange: &ChatExchange,
    params: &GenerationParams,
) -> Value {
    let mut messages = vec![json!({"role": "system", "content": exchange.system_prompt})];
    messages.extend(
        exchange
            .messages
            .iter()
            .map(|m| json!({"role": m.role.as_str(), "content": m.content})),
    );
    let (temperature, top_p) = match params.mode {
        DecodeMode::Greedy => (0.0, 1.0),
        DecodeMode::Sampled => (params.temperature, params.nucleus_p),
    };
    let mut body = json!({
        "model": model,
        "messages": messages,
        "temperature": temperature,
        "top_p": top_p,
        "max_tokens": params.max_tokens,
        "frequency_penalty": params.frequency_penalty,
    });
    if params.repetition_penalty > 0.0 {
        // vLLM-style multiplicative penalty where 1.0 is neutral
        body["repetition_penalty"] = json!(1.0 + params.repetition_penalty);
    }
    body
}

impl LlmBackend for HttpBackend {
    fn complete(
        &self,
        exchange: &ChatExchange,
        params: &GenerationParams,
    ) -> Result<String, LlmError> {
        exchange.validate()?;
        params.validate()?;
        let body = chat_request_body(&self.config.model, exchange, params);
        let resp = self.post("chat/completions", &body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Protocol("response lacks choices[0].message.content".into()))
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError> {
        if texts.is_empty() {
            return Err(LlmError::Precondition("embed called with no texts".into()));
        }
        let body = json!({"model": self.config.embedding_model, "input": texts});
        let resp = self.post("embeddings", &body)?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| LlmError::Protocol("embedding response lacks data array".into()))?;
        let mut indexed = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item
                .get("index")
                .and_then(Value::as_u64)
                .map_or(pos, |i| i as usize);
            let values = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| LlmError::Protocol("embedding item lacks vector".into()))?
                .iter()
                .map(|x| {
                    x.as_f64()
                        .ok_or_else(|| LlmError::Protocol("non-numeric embedding value".into()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            indexed.push((index, values));
        }
        indexed.sort_by_key(|(i, _)| *i);
        let model = resp
            .get("model")
            .and_then(Value::as_str)
            .unwrap_or(&self.config.embedding_model)
            .to_string();
        let vectors: Vec<_> = indexed
            .into_iter()
            .map(|(_, values)| EmbeddingVector {
                values,
                source_model_id: model.clone(),
            })
            .collect();
        check_embeddings(texts.len(), &vectors)?;
        Ok(vectors)
    }
}
