use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::Value;

use crate::error::{Error, Result};

/// Exponential backoff on transport errors and 5xx; 4xx is terminal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff * 2u32.saturating_pow(attempt)
    }
}

/// POST a JSON body and parse the JSON reply, retrying per `policy`.
pub fn post_json(
    client: &Client,
    url: &str,
    body: &Value,
    bearer: Option<&str>,
    policy: RetryPolicy,
) -> Result<Value> {
    let attempts = policy.attempts.max(1);
    let mut last_err = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            thread::sleep(policy.backoff(attempt - 1));
        }
        let mut req = client.post(url).json(body);
        if let Some(token) = bearer {
            req = req.bearer_auth(token);
        }
        match req.send() {
            Err(e) => {
                last_err = format!("transport error: {e}");
            }
            Ok(resp) => {
                let status = resp.status();
                let text = resp
                    .text()
                    .map_err(|e| Error::BackendUnavailable(format!("reading body from {url}: {e}")))?;
                if status.is_success() {
                    return serde_json::from_str(&text).map_err(|e| {
                        Error::Protocol(format!("non-JSON reply from {url}: {e}"))
                    });
                }
                if status.is_client_error() {
                    return Err(Error::BackendRejected {
                        status: status.as_u16(),
                        body: text,
                    });
                }
                last_err = format!("HTTP {status}: {text}");
            }
        }
        log::warn!("{url}: attempt {} of {attempts} failed: {last_err}", attempt + 1);
    }
    Err(Error::BackendUnavailable(format!(
        "{url} failed after {attempts} attempts: {last_err}"
    )))
}
