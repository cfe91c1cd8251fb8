use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Backend, BackendError, BackendInfo, Query};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    pub id: String,
    /// Full chat-completions URL, e.g. `https://api.openai.com/v1/chat/completions`.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key. No key means no auth header.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    120
}

/// OpenAI-compatible chat-completion client.
pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: Option<String>,
    client: reqwest::Client,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| BackendError::Auth(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Permanent(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            client,
        })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[async_trait]
impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.config.id
    }

    fn describe(&self) -> BackendInfo {
        BackendInfo {
            backend: self.config.id.clone(),
            model: Some(self.config.model.clone()),
            temperature: self.config.temperature,
        }
    }

    async fn complete(&self, query: &Query) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": query.user_message()}],
        });
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| {
            if e.is_timeout() || e.is_connect() || e.is_request() {
                BackendError::Transient(e.to_string())
            } else {
                BackendError::Permanent(e.to_string())
            }
        })?;
        let status = resp.status();
        match status.as_u16() {
            200..=299 => {}
            401 | 403 => return Err(BackendError::Auth(format!("HTTP {status}"))),
            429 => return Err(BackendError::RateLimited),
            408 | 500..=599 => return Err(BackendError::Transient(format!("HTTP {status}"))),
            _ => {
                let text = resp.text().await.unwrap_or_default();
                return Err(BackendError::Permanent(format!("HTTP {status}: {text}")));
            }
        }
        let parsed: ChatResponse = resp
            .json()
            .await
            .map_err(|e| BackendError::Transient(format!("bad response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Transient("response has no message content".into()))
    }
}
