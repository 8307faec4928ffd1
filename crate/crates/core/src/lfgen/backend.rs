use std::time::Duration;

use serde::Deserialize;

use crate::corpus::SeedGroup;
use crate::error::{Error, Result};
use crate::lf::LfKind;

use super::mock_generate;

pub const ENV_API_KEY: &str = "LAKELABEL_LLM_API_KEY";
pub const ENV_ENDPOINT: &str = "LAKELABEL_LLM_ENDPOINT";

/// A chat request plus the structured context it was built from.
#[derive(Debug, Clone, Copy)]
pub struct BackendRequest<'a> {
    pub system_text: &'a str,
    pub user_text: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
    pub group: &'a SeedGroup,
    pub kind: LfKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    /// Attempts beyond the first.
    pub retries: u32,
}

pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Replies depend only on the request.
    fn deterministic(&self) -> bool {
        false
    }

    fn complete(&self, request: &BackendRequest<'_>) -> Result<BackendReply>;
}

/// Answers every request with [`mock_generate`] of the request's seed group.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl LlmBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn complete(&self, request: &BackendRequest<'_>) -> Result<BackendReply> {
        Ok(BackendReply {
            text: mock_generate(request.group),
            retries: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    /// Chat-completions URL.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff: Duration,
}

impl HttpConfig {
    /// Endpoint and key from the environment; `endpoint` overrides the
    /// environment when given.
    pub fn from_env(endpoint: Option<String>, model: String) -> Result<Self> {
        let endpoint = endpoint
            .or_else(|| std::env::var(ENV_ENDPOINT).ok())
            .filter(|e| !e.trim().is_empty())
            .ok_or_else(|| Error::Config(format!("no LLM endpoint: set {ENV_ENDPOINT} or the config")))?;
        Ok(HttpConfig {
            endpoint,
            api_key: std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty()),
            model,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            backoff: Duration::from_millis(500),
        })
    }
}

/// OpenAI-style chat-completions client.
pub struct HttpBackend {
    name: String,
    config: HttpConfig,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            name: format!("http:{}", config.model),
            config,
            agent,
        }
    }

    fn attempt(&self, body: &serde_json::Value) -> std::result::Result<String, Attempt> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = req.send_json(body).map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if status >= 400 {
            return Err(Attempt::Fatal(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| Attempt::Fatal(format!("bad response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Attempt::Fatal("response has no message content".into()))
    }
}

impl LlmBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &BackendRequest<'_>) -> Result<BackendReply> {
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff * attempt);
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(BackendReply { text, retries: attempt }),
                Err(Attempt::Fatal(msg)) => {
                    return Err(Error::Backend {
                        backend: self.config.endpoint.clone(),
                        message: msg,
                    })
                }
                Err(Attempt::Retry(msg)) => last = msg,
            }
        }
        Err(Error::Backend {
            backend: self.config.endpoint.clone(),
            message: format!("gave up after {} retries: {last}", self.config.max_retries),
        })
    }
}
