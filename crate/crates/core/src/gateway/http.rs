use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use tracing::{debug, warn};

use super::{Backend, CompletionSettings, GatewayError, Prompt};

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    /// Environment variable holding the API key. Unset means no auth header.
    pub api_key_env: String,
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub timeout: Duration,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            timeout: Duration::from_secs(60),
        }
    }
}

/// Chat-completion client with bounded retries.
#[derive(Debug)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    config: HttpConfig,
    api_key: Option<String>,
}

enum Attempt {
    Done(String),
    Retry { reason: String, wait: Option<Duration> },
    Fail(GatewayError),
}

impl HttpBackend {
    /// Reads the API key from `config.api_key_env`.
    pub fn new(config: HttpConfig) -> Result<Self, GatewayError> {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        Self::with_api_key(config, api_key)
    }

    pub fn with_api_key(config: HttpConfig, api_key: Option<String>) -> Result<Self, GatewayError> {
        if config.base_url.trim().is_empty() {
            return Err(GatewayError::Misconfigured("empty base URL".into()));
        }
        if config.max_attempts == 0 {
            return Err(GatewayError::Misconfigured("max_attempts must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::Misconfigured(e.to_string()))?;
        Ok(Self {
            client,
            config,
            api_key,
        })
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    /// JSON body sent for `prompt`. Identical inputs give identical bodies.
    pub fn request_body(prompt: &Prompt, settings: &CompletionSettings) -> Value {
        json!({
            "model": settings.model,
            "messages": prompt.messages(),
            "temperature": settings.temperature,
            "seed": settings.seed,
            "max_tokens": settings.max_output_tokens,
        })
    }

    fn backoff(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.saturating_sub(1));
        self.config
            .initial_backoff
            .saturating_mul(factor)
            .min(self.config.max_backoff)
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let mut request = self.client.post(self.endpoint()).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = match request.send() {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry {
                    reason: e.to_string(),
                    wait: None,
                }
            }
        };
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            let wait = response
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Attempt::Retry {
                reason: format!("HTTP {status}"),
                wait,
            };
        }
        let text = match response.text() {
            Ok(t) => t,
            Err(e) => {
                return Attempt::Retry {
                    reason: e.to_string(),
                    wait: None,
                }
            }
        };
        if !status.is_success() {
            return Attempt::Fail(GatewayError::BackendUnavailable {
                attempts: 1,
                reason: format!("HTTP {status}: {text}"),
            });
        }
        match parse_completion(&text) {
            Ok(content) => Attempt::Done(content),
            Err(e) => Attempt::Fail(e),
        }
    }
}

/// Extracts the first choice's text from a chat-completion response.
pub(crate) fn parse_completion(text: &str) -> Result<String, GatewayError> {
    let value: Value = serde_json::from_str(text).map_err(|e| GatewayError::BackendUnavailable {
        attempts: 1,
        reason: format!("malformed response: {e}"),
    })?;
    let choice = &value["choices"][0];
    if choice["finish_reason"].as_str() == Some("length") {
        return Err(GatewayError::OutputTruncated);
    }
    choice["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| GatewayError::BackendUnavailable {
            attempts: 1,
            reason: "response has no message content".into(),
        })
}

impl Backend for HttpBackend {
    fn complete(
        &mut self,
        prompt: &Prompt,
        settings: &CompletionSettings,
    ) -> Result<String, GatewayError> {
        let body = Self::request_body(prompt, settings);
        let mut last_reason = String::new();
        for attempt in 1..=self.config.max_attempts {
            if attempt > 1 {
                debug!(attempt, "retrying chat completion");
            }
            match self.attempt(&body) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fail(GatewayError::BackendUnavailable { reason, .. }) => {
                    return Err(GatewayError::BackendUnavailable {
                        attempts: attempt,
                        reason,
                    })
                }
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry { reason, wait } => {
                    warn!(attempt, %reason, "chat completion failed");
                    last_reason = reason;
                    if attempt < self.config.max_attempts {
                        let delay = wait
                            .unwrap_or_else(|| self.backoff(attempt))
                            .min(self.config.max_backoff);
                        thread::sleep(delay);
                    }
                }
            }
        }
        Err(GatewayError::BackendUnavailable {
            attempts: self.config.max_attempts,
            reason: last_reason,
        })
    }
}
