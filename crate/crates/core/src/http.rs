//! Minimal JSON-over-HTTP client shared by the external model backends.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
    /// Timeouts, connection failures, 429 and 5xx are retryable.
    pub retryable: bool,
}

/// Connection settings for one external endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    2
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>) -> Self {
        EndpointConfig {
            url: url.into(),
            token: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    config: EndpointConfig,
    agent: ureq::Agent,
}

impl JsonClient {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        JsonClient { config, agent }
    }

    pub fn url(&self) -> &str {
        &self.config.url
    }

    /// POST `body`, retrying retryable failures up to `max_retries` times.
    pub fn post(&self, body: &Value) -> Result<Value, TransportError> {
        let mut attempt = 0;
        loop {
            match self.post_once(body) {
                Ok(v) => return Ok(v),
                Err(e) if e.retryable && attempt < self.config.max_retries => {
                    attempt += 1;
                    log::warn!("{} failed ({e}); retry {attempt}", self.config.url);
                    std::thread::sleep(Duration::from_millis(100 << attempt.min(6)));
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn post_once(&self, body: &Value) -> Result<Value, TransportError> {
        let mut request = self.agent.post(&self.config.url);
        if let Some(token) = &self.config.token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(|e| TransportError {
            message: format!("request to {} failed: {e}", self.config.url),
            retryable: true,
        })?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(TransportError {
                message: format!("{} returned HTTP {status}", self.config.url),
                retryable: status == 429 || status >= 500,
            });
        }
        response.body_mut().read_json::<Value>().map_err(|e| TransportError {
            message: format!("invalid JSON from {}: {e}", self.config.url),
            retryable: false,
        })
    }
}

/// Pull a required field out of a response object.
pub(crate) fn field<'a>(response: &'a Value, name: &str) -> Result<&'a Value, TransportError> {
    response.get(name).ok_or_else(|| TransportError {
        message: format!("response is missing `{name}`"),
        retryable: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unreachable_endpoint_is_retryable() {
        let client = JsonClient::new(EndpointConfig {
            url: "http://127.0.0.1:9/none".into(),
            token: None,
            timeout_secs: 1,
            max_retries: 0,
        });
        let err = client.post(&serde_json::json!({"prompt": "x"})).unwrap_err();
        assert!(err.retryable);
    }
}
