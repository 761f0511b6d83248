//! OpenAI-compatible `/v1/chat/completions` client with per-token logprobs.

use std::time::Duration;

use reqwest::blocking::Client;
use serde::Deserialize;
use serde_json::{json, Value};

use super::http::{post_json, RetryPolicy};
use super::{Capabilities, ChatBackend, ChatMessage, FinishReason, Generation, SamplingParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct OpenAiConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub capabilities: Capabilities,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

pub struct OpenAiBackend {
    id: String,
    url: String,
    config: OpenAiConfig,
    client: Client,
}

impl OpenAiBackend {
    pub fn new(config: OpenAiConfig) -> Result<Self> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::Config(format!("building HTTP client: {e}")))?;
        let base = config.base_url.trim_end_matches('/');
        let url = if base.ends_with("/v1") {
            format!("{base}/chat/completions")
        } else {
            format!("{base}/v1/chat/completions")
        };
        Ok(Self {
            id: format!("openai:{}@{}", config.model, base),
            url,
            config,
            client,
        })
    }

    fn request_body(&self, messages: &[ChatMessage], params: &SamplingParams, n: u32) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": params.temperature,
            "n": n,
            "max_tokens": params.max_tokens,
            "logprobs": params.want_logprobs,
        });
        if let (Some(seed), true) = (params.seed, self.config.capabilities.seed) {
            body["seed"] = json!(seed);
        }
        body
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Debug, Deserialize)]
struct TokenLogprob {
    token: String,
    logprob: f64,
}

pub(crate) fn parse_chat_response(value: Value) -> Result<Vec<Generation>> {
    let resp: ChatResponse = serde_json::from_value(value)
        .map_err(|e| Error::Protocol(format!("unexpected chat-completions reply: {e}")))?;
    Ok(resp
        .choices
        .into_iter()
        .map(|choice| {
            let text = choice.message.content.unwrap_or_default();
            let (tokens, token_logprobs) = match choice.logprobs.and_then(|l| l.content) {
                Some(items) => {
                    let (t, l): (Vec<_>, Vec<_>) =
                        items.into_iter().map(|i| (i.token, i.logprob)).unzip();
                    (t, Some(l))
                }
                None => (Vec::new(), None),
            };
            Generation {
                text,
                tokens,
                token_logprobs,
                finish_reason: FinishReason::from_wire(choice.finish_reason.as_deref()),
            }
        })
        .collect())
}

impl ChatBackend for OpenAiBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        self.config.capabilities
    }

    fn generate(&self, messages: &[ChatMessage], params: &SamplingParams) -> Result<Vec<Generation>> {
        let want = params.num_samples as usize;
        let mut out = Vec::with_capacity(want);
        // Some servers ignore `n` and return a single choice; top up until filled.
        for _ in 0..want {
            let remaining = (want - out.len()) as u32;
            let body = self.request_body(messages, params, remaining);
            let reply = post_json(
                &self.client,
                &self.url,
                &body,
                self.config.api_key.as_deref(),
                self.config.retry,
            )?;
            let gens = parse_chat_response(reply)?;
            if gens.is_empty() {
                return Err(Error::Protocol("chat-completions reply had no choices".into()));
            }
            out.extend(gens);
            if out.len() >= want {
                break;
            }
        }
        out.truncate(want);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_logprob_extension() {
        let v = json!({
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": "Yes."},
                "logprobs": {"content": [
                    {"token": "Yes", "logprob": -0.25, "top_logprobs": []},
                    {"token": ".", "logprob": -0.5}
                ]},
                "finish_reason": "stop"
            }]
        });
        let gens = parse_chat_response(v).unwrap();
        assert_eq!(gens.len(), 1);
        assert_eq!(gens[0].text, "Yes.");
        assert_eq!(gens[0].tokens, vec!["Yes", "."]);
        assert_eq!(gens[0].token_logprobs, Some(vec![-0.25, -0.5]));
        assert_eq!(gens[0].finish_reason, FinishReason::Stop);
    }

    #[test]
    fn url_handles_v1_suffix() {
        let mk = |base: &str| {
            OpenAiBackend::new(OpenAiConfig {
                base_url: base.into(),
                model: "m".into(),
                api_key: None,
                capabilities: Capabilities::default(),
                timeout: Duration::from_secs(1),
                retry: RetryPolicy::default(),
            })
            .unwrap()
            .url
        };
        assert_eq!(mk("http://h:8000"), "http://h:8000/v1/chat/completions");
        assert_eq!(mk("http://h:8000/v1/"), "http://h:8000/v1/chat/completions");
    }

    #[test]
    fn seed_sent_only_when_honored() {
        let mut cfg = OpenAiConfig {
            base_url: "http://h".into(),
            model: "m".into(),
            api_key: None,
            capabilities: Capabilities::default(),
            timeout: Duration::from_secs(1),
            retry: RetryPolicy::default(),
        };
        let params = SamplingParams {
            seed: Some(7),
            ..SamplingParams::greedy(8)
        };
        let msgs = [ChatMessage::user("q")];
        let b = OpenAiBackend::new(cfg.clone()).unwrap();
        assert!(b.request_body(&msgs, &params, 1).get("seed").is_none());
        cfg.capabilities.seed = true;
        let b = OpenAiBackend::new(cfg).unwrap();
        assert_eq!(b.request_body(&msgs, &params, 1)["seed"], json!(7));
    }
}
