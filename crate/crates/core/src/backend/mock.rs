//! Scripted backend for tests and offline golden runs.
//!
//! A script is an ordered list of rules. A rule fires when every one of its
//! `contains` substrings occurs in the non-system message contents; the first
//! firing rule supplies the replies. Sample `i` of a request gets reply
//! `i mod len(replies)`, so the backend is a pure function of
//! (messages, params, script).

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Capabilities, ChatBackend, ChatMessage, FinishReason, Generation, Role, SamplingParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    Text(String),
    Detailed {
        text: String,
        /// Same logprob for every token.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        logprob: Option<f64>,
        /// One logprob per whitespace token.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        logprobs: Option<Vec<f64>>,
    },
}

impl MockReply {
    fn text(&self) -> &str {
        match self {
            MockReply::Text(t) | MockReply::Detailed { text: t, .. } => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub contains: Vec<String>,
    pub replies: Vec<MockReply>,
}

impl MockRule {
    pub fn new<I, S>(needle: &str, replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            contains: vec![needle.to_string()],
            replies: replies.into_iter().map(|r| MockReply::Text(r.into())).collect(),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_reply: Option<MockReply>,
    /// Whether the mock advertises logprob support.
    #[serde(default = "default_true")]
    pub logprobs: bool,
    /// Mock NLI table; read by the entailment module, ignored here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nli: Option<serde_json::Value>,
}

impl MockScript {
    pub fn from_rules(rules: Vec<MockRule>) -> Self {
        Self {
            rules,
            default_reply: None,
            logprobs: true,
            nli: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    fn lookup(&self, prompt: &str) -> Option<&[MockReply]> {
        self.rules
            .iter()
            .find(|r| !r.replies.is_empty() && r.contains.iter().all(|c| prompt.contains(c.as_str())))
            .map(|r| r.replies.as_slice())
            .or_else(|| self.default_reply.as_ref().map(std::slice::from_ref))
    }
}

pub struct MockBackend {
    id: String,
    script: MockScript,
    calls: AtomicU64,
    token_re: Regex,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        let canonical = serde_json::to_vec(&script).expect("mock script serializes");
        let digest = hex::encode(Sha256::digest(&canonical));
        Self {
            id: format!("mock:{}", &digest[..16]),
            script,
            calls: AtomicU64::new(0),
            token_re: Regex::new(r"\s*\S+").unwrap(),
        }
    }

    /// Number of `generate` invocations so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    /// Whitespace-attached tokens: concatenating them gives back `text`.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let mut tokens: Vec<String> = self
            .token_re
            .find_iter(text)
            .map(|m| m.as_str().to_string())
            .collect();
        let consumed: usize = tokens.iter().map(String::len).sum();
        if consumed < text.len() {
            let rest = &text[consumed..];
            match tokens.last_mut() {
                Some(last) => last.push_str(rest),
                None => tokens.push(rest.to_string()),
            }
        }
        tokens
    }

    fn render(&self, reply: &MockReply, max_tokens: usize) -> Result<Generation> {
        let mut tokens = self.tokenize(reply.text());
        let mut logprobs: Vec<f64> = match reply {
            MockReply::Detailed {
                logprobs: Some(lps), ..
            } => {
                if lps.len() != tokens.len() {
                    return Err(Error::Config(format!(
                        "mock reply {:?}: {} tokens but {} logprobs",
                        reply.text(),
                        tokens.len(),
                        lps.len()
                    )));
                }
                lps.clone()
            }
            MockReply::Detailed {
                logprob: Some(lp), ..
            } => vec![*lp; tokens.len()],
            _ => tokens.iter().map(|t| synthetic_logprob(t)).collect(),
        };
        let mut finish_reason = FinishReason::Stop;
        if tokens.len() > max_tokens {
            tokens.truncate(max_tokens);
            logprobs.truncate(max_tokens);
            finish_reason = FinishReason::Length;
        }
        Ok(Generation {
            text: tokens.concat(),
            tokens,
            token_logprobs: self.script.logprobs.then_some(logprobs),
            finish_reason,
        })
    }
}

/// Deterministic pseudo-logprob in [-1.5, -0.01] derived from the token text.
fn synthetic_logprob(token: &str) -> f64 {
    let d = Sha256::digest(token.trim().as_bytes());
    let v = u16::from_be_bytes([d[0], d[1]]) % 150;
    -((v as f64) + 1.0) / 100.0
}

pub(crate) fn prompt_text(messages: &[ChatMessage]) -> String {
    messages
        .iter()
        .filter(|m| m.role != Role::System)
        .map(|m| m.content.as_str())
        .collect::<Vec<_>>()
        .join("\n\n")
}

impl ChatBackend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            logprobs: self.script.logprobs,
            seed: false,
        }
    }

    fn generate(&self, messages: &[ChatMessage], params: &SamplingParams) -> Result<Vec<Generation>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let prompt = prompt_text(messages);
        let replies = self.script.lookup(&prompt).ok_or_else(|| {
            let preview: String = prompt.chars().take(160).collect();
            Error::MockScriptMiss(preview)
        })?;
        (0..params.num_samples as usize)
            .map(|i| self.render(&replies[i % replies.len()], params.max_tokens as usize))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q1_backend() -> MockBackend {
        MockBackend::new(MockScript::from_rules(vec![MockRule::new("Q1", ["yes", "no"])]))
    }

    #[test]
    fn scripted_replies_in_order() {
        let b = q1_backend();
        let params = SamplingParams {
            num_samples: 2,
            ..SamplingParams::greedy(16)
        };
        let gens = b.generate(&[ChatMessage::user("Q1")], &params).unwrap();
        let texts: Vec<_> = gens.iter().map(|g| g.text.as_str()).collect();
        assert_eq!(texts, ["yes", "no"]);
    }

    #[test]
    fn greedy_single_is_repeatable() {
        let b = q1_backend();
        let p = SamplingParams::greedy(16);
        let a = b.generate(&[ChatMessage::user("Q1")], &p).unwrap();
        let c = b.generate(&[ChatMessage::user("Q1")], &p).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a, c);
    }

    #[test]
    fn tokens_concatenate_to_text() {
        let b = q1_backend();
        for text in ["", "one", "  lead and trail  ", "a\nb\tc"] {
            assert_eq!(b.tokenize(text).concat(), text);
        }
    }

    #[test]
    fn truncates_at_max_tokens() {
        let b = MockBackend::new(MockScript::from_rules(vec![MockRule::new(
            "x",
            ["one two three four"],
        )]));
        let g = &b.generate(&[ChatMessage::user("x")], &SamplingParams::greedy(2)).unwrap()[0];
        assert_eq!(g.text, "one two");
        assert_eq!(g.finish_reason, FinishReason::Length);
    }

    #[test]
    fn miss_without_default_is_an_error() {
        let b = q1_backend();
        let err = b
            .generate(&[ChatMessage::user("Q2")], &SamplingParams::greedy(4))
            .unwrap_err();
        assert!(matches!(err, Error::MockScriptMiss(_)));
    }

    #[test]
    fn synthetic_logprobs_are_non_positive() {
        for t in ["a", "the", " Ringed", "sideroblasts."] {
            let lp = synthetic_logprob(t);
            assert!((-1.5..=-0.01).contains(&lp), "{lp}");
        }
    }
}
