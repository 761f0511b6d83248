//! Chat-completion backends and the caching gateway in front of them.
//!
//! Every model call in the crate goes through [`Gateway::complete`], which
//! checks the response cache, calls the backend on a miss, validates the
//! returned generations and writes them back before returning.

mod cache;
mod http;
mod mock;
mod openai;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use cache::{inspect as inspect_cache, CacheEntry, CacheSummary, ResponseCache, RunStats};
pub use http::{post_json, RetryPolicy};
pub use mock::{MockBackend, MockReply, MockRule, MockScript};
pub use openai::{OpenAiBackend, OpenAiConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.role != Role::System && self.content.trim().is_empty() {
            return Err(Error::ContractViolation(format!(
                "{:?} message with empty content",
                self.role
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub num_samples: u32,
    pub max_tokens: u32,
    pub want_logprobs: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SamplingParams {
    /// Single greedy generation without logprobs.
    pub fn greedy(max_tokens: u32) -> Self {
        Self {
            temperature: 0.0,
            num_samples: 1,
            max_tokens,
            want_logprobs: false,
            seed: None,
        }
    }

    /// Five samples at temperature 0.5 with logprobs, the protocol used for
    /// every sampling-based estimator.
    pub fn entropy_protocol(max_tokens: u32) -> Self {
        Self {
            temperature: 0.5,
            num_samples: 5,
            max_tokens,
            want_logprobs: true,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::ContractViolation(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        if self.num_samples == 0 {
            return Err(Error::ContractViolation("num_samples must be >= 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::ContractViolation("max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Other,
}

impl FinishReason {
    pub fn from_wire(s: Option<&str>) -> Self {
        match s {
            Some("stop") | Some("eos") => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            _ => FinishReason::Other,
        }
    }
}

/// One sampled model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    #[serde(default)]
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    pub finish_reason: FinishReason,
}

impl Generation {
    pub fn logprobs(&self) -> Result<&[f64]> {
        self.token_logprobs
            .as_deref()
            .ok_or_else(|| Error::Capability("generation carries no token logprobs".into()))
    }
}

/// What a backend can honor. Declared in config, not probed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Capabilities {
    #[serde(default)]
    pub logprobs: bool,
    #[serde(default)]
    pub seed: bool,
}

pub trait ChatBackend: Send + Sync {
    /// Stable identifier; part of every cache key.
    fn id(&self) -> &str;

    fn capabilities(&self) -> Capabilities;

    /// Produce `params.num_samples` generations. Called only on cache misses.
    fn generate(&self, messages: &[ChatMessage], params: &SamplingParams) -> Result<Vec<Generation>>;
}

/// Result of a gateway call, with the cache key kept for provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub generations: Vec<Generation>,
    pub cache_key: String,
    pub from_cache: bool,
}

/// Digest of a canonical serialization of the request.
///
/// Object keys are sorted at every level; message content is hashed verbatim.
pub fn cache_key(messages: &[ChatMessage], params: &SamplingParams, backend_id: &str) -> String {
    let doc = json!({
        "backend": backend_id,
        "messages": messages,
        "params": params,
        "v": 1,
    });
    let mut canonical = String::new();
    write_canonical(&doc, &mut canonical);
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

#[derive(Debug, Default)]
struct Counters {
    hits: AtomicU64,
    misses: AtomicU64,
}

/// Cache-fronted access to one backend. Cheap to share across worker threads.
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    cache: Option<ResponseCache>,
    counters: Counters,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, cache: Option<ResponseCache>) -> Self {
        Self {
            backend,
            cache,
            counters: Counters::default(),
        }
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn capabilities(&self) -> Capabilities {
        self.backend.capabilities()
    }

    pub fn stats(&self) -> RunStats {
        RunStats {
            hits: self.counters.hits.load(Ordering::Relaxed),
            misses: self.counters.misses.load(Ordering::Relaxed),
        }
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    pub fn complete(&self, messages: &[ChatMessage], params: &SamplingParams) -> Result<Completion> {
        if messages.is_empty() {
            return Err(Error::ContractViolation("no messages to complete".into()));
        }
        for m in messages {
            m.validate()?;
        }
        params.validate()?;

        let caps = self.backend.capabilities();
        if params.want_logprobs && !caps.logprobs {
            return Err(Error::Capability(format!(
                "backend `{}` cannot supply token logprobs",
                self.backend.id()
            )));
        }
        let mut params = params.clone();
        if !caps.seed {
            params.seed = None;
        }

        let key = cache_key(messages, &params, self.backend.id());
        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.get(&key) {
                self.counters.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(Completion {
                    generations: entry.response,
                    cache_key: key,
                    from_cache: true,
                });
            }
        }

        self.counters.misses.fetch_add(1, Ordering::Relaxed);
        let mut generations = self.backend.generate(messages, &params)?;
        validate_generations(&mut generations, &params)?;

        if let Some(cache) = &self.cache {
            cache.put(&CacheEntry {
                key: key.clone(),
                backend_id: self.backend.id().to_string(),
                messages: messages.to_vec(),
                params: params.clone(),
                response: generations.clone(),
                created_unix: cache::now_unix(),
            })?;
        }
        Ok(Completion {
            generations,
            cache_key: key,
            from_cache: false,
        })
    }
}

fn validate_generations(generations: &mut [Generation], params: &SamplingParams) -> Result<()> {
    if generations.len() != params.num_samples as usize {
        return Err(Error::Protocol(format!(
            "expected {} generations, backend returned {}",
            params.num_samples,
            generations.len()
        )));
    }
    for (i, g) in generations.iter_mut().enumerate() {
        if !params.want_logprobs {
            g.token_logprobs = None;
            continue;
        }
        let lps = g.token_logprobs.as_ref().ok_or_else(|| {
            Error::Capability(format!("generation {i} is missing requested logprobs"))
        })?;
        if lps.len() != g.tokens.len() {
            return Err(Error::Protocol(format!(
                "generation {i}: {} tokens but {} logprobs",
                g.tokens.len(),
                lps.len()
            )));
        }
        if let Some(bad) = lps.iter().find(|lp| !lp.is_finite() || **lp > 0.0) {
            return Err(Error::Protocol(format!(
                "generation {i}: invalid token logprob {bad}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msgs() -> Vec<ChatMessage> {
        vec![ChatMessage::system("sys"), ChatMessage::user("Q1")]
    }

    #[test]
    fn cache_key_is_deterministic() {
        let p = SamplingParams::greedy(64);
        assert_eq!(cache_key(&msgs(), &p, "b"), cache_key(&msgs(), &p, "b"));
        assert_eq!(cache_key(&msgs(), &p, "b").len(), 64);
    }

    #[test]
    fn cache_key_depends_on_temperature_and_backend() {
        let mut a = SamplingParams::entropy_protocol(64);
        let k = cache_key(&msgs(), &a, "b");
        a.temperature = 0.7;
        assert_ne!(k, cache_key(&msgs(), &a, "b"));
        a.temperature = 0.5;
        assert_eq!(k, cache_key(&msgs(), &a, "b"));
        assert_ne!(k, cache_key(&msgs(), &a, "c"));
    }

    #[test]
    fn canonical_form_sorts_keys() {
        let mut s = String::new();
        write_canonical(&json!({"b": 1, "a": {"d": [1, 2], "c": "x"}}), &mut s);
        assert_eq!(s, r#"{"a":{"c":"x","d":[1,2]},"b":1}"#);
    }

    #[test]
    fn rejects_positive_logprobs() {
        let mut gens = vec![Generation {
            text: "a".into(),
            tokens: vec!["a".into()],
            token_logprobs: Some(vec![0.1]),
            finish_reason: FinishReason::Stop,
        }];
        let p = SamplingParams {
            num_samples: 1,
            ..SamplingParams::entropy_protocol(8)
        };
        assert!(matches!(
            validate_generations(&mut gens, &p),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn strips_unrequested_logprobs() {
        let mut gens = vec![Generation {
            text: "a".into(),
            tokens: vec!["a".into()],
            token_logprobs: Some(vec![-0.1]),
            finish_reason: FinishReason::Stop,
        }];
        validate_generations(&mut gens, &SamplingParams::greedy(8)).unwrap();
        assert!(gens[0].token_logprobs.is_none());
    }

    #[test]
    fn sampling_params_validation() {
        let mut p = SamplingParams::greedy(1);
        assert!(p.validate().is_ok());
        p.temperature = -0.1;
        assert!(p.validate().is_err());
        p.temperature = 0.0;
        p.num_samples = 0;
        assert!(p.validate().is_err());
    }
}
