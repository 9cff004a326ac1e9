//! Backend speaking the OpenAI-compatible chat completions protocol.

use std::time::Duration;

use crate::error::{Error, Result};
use crate::gateway::{Backend, BackendConfig, BackendIdentity, CompletionRequest, Role};

/// Single user message sent over the wire. Split queries append the example
/// under an `Example:` header, separated from the question by a blank line;
/// generation prompts go through unchanged.
pub fn assemble_user_message(request: &CompletionRequest) -> String {
    match request.role {
        Role::Split => format!(
            "{}\n\nExample:\n{}",
            request.prompt,
            request.input.as_deref().unwrap_or("")
        ),
        _ => request.prompt.clone(),
    }
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    model: String,
    api_key: String,
    max_retries: u32,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("api_key", &"<redacted>")
            .field("max_retries", &self.max_retries)
            .finish()
    }
}

impl HttpBackend {
    pub fn from_config(config: &BackendConfig) -> Result<HttpBackend> {
        let base_url = config
            .base_url
            .as_deref()
            .ok_or_else(|| Error::Config("http backend requires base_url".to_string()))?
            .trim_end_matches('/')
            .to_string();
        let model = config
            .model
            .clone()
            .ok_or_else(|| Error::Config("http backend requires a model name".to_string()))?;
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| Error::MissingApiKey(config.api_key_env.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Transport {
                attempts: 0,
                message: format!("cannot build http client: {e}"),
            })?;
        Ok(HttpBackend {
            client,
            base_url,
            model,
            api_key,
            max_retries: config.max_retries,
        })
    }

    fn backoff(attempt: u32) -> Duration {
        let millis = 250u64.saturating_mul(1 << attempt.min(4));
        Duration::from_millis(millis)
    }

    fn extract_content(body: &str) -> Option<String> {
        let value: serde_json::Value = serde_json::from_str(body).ok()?;
        value
            .get("choices")?
            .get(0)?
            .get("message")?
            .get("content")?
            .as_str()
            .map(str::to_string)
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String> {
        let url = format!("{}/chat/completions", self.base_url);
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": assemble_user_message(request)}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });

        let mut last_error = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(Self::backoff(attempt - 1));
            }
            let response = self
                .client
                .post(&url)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send();
            match response {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    if status.is_success() {
                        return Self::extract_content(&text).ok_or_else(|| Error::Transport {
                            attempts: attempt + 1,
                            message: format!("malformed response body: {}", truncate(&text, 200)),
                        });
                    }
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    last_error = format!("status {}: {}", status.as_u16(), truncate(&text, 200));
                    if !retryable {
                        return Err(Error::Transport {
                            attempts: attempt + 1,
                            message: last_error,
                        });
                    }
                }
                Err(e) => {
                    last_error = e.to_string();
                }
            }
        }
        Err(Error::Transport {
            attempts: self.max_retries + 1,
            message: last_error,
        })
    }

    fn identity(&self) -> BackendIdentity {
        BackendIdentity {
            kind: "http".to_string(),
            model: self.model.clone(),
        }
    }
}

fn truncate(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        s.to_string()
    } else {
        let cut: String = s.chars().take(max).collect();
        format!("{cut}...")
    }
}
