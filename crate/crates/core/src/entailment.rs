//! NLI judges, the bidirectional-entailment equivalence test and greedy
//! semantic clustering built on top of it.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backend::{post_json, RetryPolicy};
use crate::error::{Error, Result};

pub const DEFAULT_SEPARATOR: &str = " [SEP] ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntailmentLabel {
    Entailment,
    Neutral,
    Contradiction,
}

impl EntailmentLabel {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "entailment" | "entailed" | "entails" => Some(Self::Entailment),
            "neutral" => Some(Self::Neutral),
            "contradiction" | "contradicts" => Some(Self::Contradiction),
            _ => None,
        }
    }
}

impl fmt::Display for EntailmentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Entailment => "entailment",
            Self::Neutral => "neutral",
            Self::Contradiction => "contradiction",
        })
    }
}

pub trait NliJudge: Send + Sync {
    fn judge(&self, premise: &str, hypothesis: &str) -> Result<EntailmentLabel>;
}

/// Client for an NLI service exposing `POST /nli`.
pub struct HttpNliJudge {
    url: String,
    client: Client,
    bearer: Option<String>,
    retry: RetryPolicy,
}

impl HttpNliJudge {
    pub fn new(base_url: &str, bearer: Option<String>, timeout: Duration, retry: RetryPolicy) -> Result<Self> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("building HTTP client: {e}")))?;
        Ok(Self {
            url: format!("{}/nli", base_url.trim_end_matches('/')),
            client,
            bearer,
            retry,
        })
    }
}

pub(crate) fn parse_nli_reply(reply: &Value) -> Result<EntailmentLabel> {
    let label = reply
        .get("label")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Protocol(format!("NLI reply has no string `label`: {reply}")))?;
    EntailmentLabel::parse(label)
        .ok_or_else(|| Error::Protocol(format!("unknown NLI label `{label}`")))
}

impl NliJudge for HttpNliJudge {
    fn judge(&self, premise: &str, hypothesis: &str) -> Result<EntailmentLabel> {
        check_non_empty(premise, hypothesis)?;
        let body = json!({ "premise": premise, "hypothesis": hypothesis });
        let reply = post_json(&self.client, &self.url, &body, self.bearer.as_deref(), self.retry)?;
        parse_nli_reply(&reply)
    }
}

fn check_non_empty(premise: &str, hypothesis: &str) -> Result<()> {
    if premise.trim().is_empty() || hypothesis.trim().is_empty() {
        return Err(Error::ContractViolation(
            "NLI premise and hypothesis must be non-empty".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockPair {
    pub premise: String,
    pub hypothesis: String,
    pub label: EntailmentLabel,
}

fn default_reflexive() -> bool {
    true
}

fn default_label() -> EntailmentLabel {
    EntailmentLabel::Neutral
}

fn default_separator() -> String {
    DEFAULT_SEPARATOR.to_string()
}

/// JSON table backing [`MockJudge`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockNliTable {
    /// identical premise and hypothesis → entailment
    #[serde(default = "default_reflexive")]
    pub reflexive: bool,
    #[serde(default = "default_label")]
    pub default: EntailmentLabel,
    /// Context separator; lookups retry on the text after its last occurrence.
    #[serde(default = "default_separator")]
    pub separator: String,
    /// Ordered (premise, hypothesis) → label.
    #[serde(default)]
    pub pairs: Vec<MockPair>,
    /// Groups of mutually entailing texts.
    #[serde(default)]
    pub equivalent: Vec<Vec<String>>,
    /// Groups whose distinct members contradict each other.
    #[serde(default)]
    pub contradictions: Vec<Vec<String>>,
}

impl Default for MockNliTable {
    fn default() -> Self {
        Self {
            reflexive: true,
            default: EntailmentLabel::Neutral,
            separator: default_separator(),
            pairs: Vec::new(),
            equivalent: Vec::new(),
            contradictions: Vec::new(),
        }
    }
}

/// Table-driven judge; a pure function of its table.
pub struct MockJudge {
    table: MockNliTable,
    pairs: HashMap<(String, String), EntailmentLabel>,
    calls: AtomicU64,
}

impl MockJudge {
    pub fn new(table: MockNliTable) -> Self {
        let mut pairs = HashMap::new();
        for group in &table.contradictions {
            for a in group {
                for b in group {
                    if a != b {
                        pairs.insert((a.clone(), b.clone()), EntailmentLabel::Contradiction);
                    }
                }
            }
        }
        for group in &table.equivalent {
            for a in group {
                for b in group {
                    pairs.insert((a.clone(), b.clone()), EntailmentLabel::Entailment);
                }
            }
        }
        // explicit pairs win
        for p in &table.pairs {
            pairs.insert((p.premise.clone(), p.hypothesis.clone()), p.label);
        }
        Self {
            table,
            pairs,
            calls: AtomicU64::new(0),
        }
    }

    pub fn from_value(value: &Value) -> Result<Self> {
        Ok(Self::new(serde_json::from_value(value.clone())?))
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn strip_context<'a>(&self, text: &'a str) -> &'a str {
        if self.table.separator.is_empty() {
            return text;
        }
        text.rsplit_once(self.table.separator.as_str())
            .map_or(text, |(_, tail)| tail)
    }

    fn lookup(&self, premise: &str, hypothesis: &str) -> Option<EntailmentLabel> {
        if self.table.reflexive && premise == hypothesis {
            return Some(EntailmentLabel::Entailment);
        }
        self.pairs
            .get(&(premise.to_string(), hypothesis.to_string()))
            .copied()
    }
}

impl NliJudge for MockJudge {
    fn judge(&self, premise: &str, hypothesis: &str) -> Result<EntailmentLabel> {
        check_non_empty(premise, hypothesis)?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        let label = self
            .lookup(premise, hypothesis)
            .or_else(|| self.lookup(self.strip_context(premise), self.strip_context(hypothesis)))
            .unwrap_or(self.table.default);
        Ok(label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailmentConfig {
    #[serde(default = "default_separator")]
    pub separator: String,
    #[serde(default = "default_reflexive")]
    pub include_context: bool,
}

impl Default for EntailmentConfig {
    fn default() -> Self {
        Self {
            separator: default_separator(),
            include_context: true,
        }
    }
}

/// Partition of generation indices into meaning-equivalent clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticPartition {
    pub clusters: Vec<Vec<usize>>,
    pub context: String,
}

impl SemanticPartition {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Disjoint, covering `0..n`, and no empty cluster.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for cluster in &self.clusters {
            if cluster.is_empty() {
                return Err(Error::ContractViolation("empty cluster in partition".into()));
            }
            for &i in cluster {
                if i >= n {
                    return Err(Error::ContractViolation(format!(
                        "partition index {i} out of range for {n} items"
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::ContractViolation(format!(
                        "index {i} appears in more than one cluster"
                    )));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::ContractViolation(format!(
                "index {missing} is not covered by the partition"
            )));
        }
        Ok(())
    }
}

/// Bidirectional-entailment equivalence on top of an [`NliJudge`].
pub struct Entailer<'a> {
    judge: &'a dyn NliJudge,
    config: EntailmentConfig,
}

impl<'a> Entailer<'a> {
    pub fn new(judge: &'a dyn NliJudge, config: EntailmentConfig) -> Self {
        Self { judge, config }
    }

    fn with_context(&self, context: &str, text: &str) -> String {
        if self.config.include_context && !context.is_empty() {
            format!("{context}{}{text}", self.config.separator)
        } else {
            text.to_string()
        }
    }

    /// True iff each of `a` and `b` (prefixed with the shared context) is
    /// judged to entail the other.
    pub fn bidirectionally_equivalent(&self, a: &str, b: &str, shared_context: &str) -> Result<bool> {
        if a.trim().is_empty() || b.trim().is_empty() {
            return Err(Error::ContractViolation(
                "equivalence check needs two non-empty texts".into(),
            ));
        }
        let left = self.with_context(shared_context, a);
        let right = self.with_context(shared_context, b);
        if self.judge.judge(&left, &right)? != EntailmentLabel::Entailment {
            return Ok(false);
        }
        Ok(self.judge.judge(&right, &left)? == EntailmentLabel::Entailment)
    }

    /// One greedy pass: each text joins the first cluster whose first member
    /// is equivalent to it, otherwise it opens a new cluster.
    pub fn cluster_semantically(&self, texts: &[&str], shared_context: &str) -> Result<SemanticPartition> {
        if texts.is_empty() {
            return Err(Error::ContractViolation("cannot cluster an empty list".into()));
        }
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        'outer: for (i, text) in texts.iter().enumerate() {
            for cluster in clusters.iter_mut() {
                if self.bidirectionally_equivalent(texts[cluster[0]], text, shared_context)? {
                    cluster.push(i);
                    continue 'outer;
                }
            }
            clusters.push(vec![i]);
        }
        Ok(SemanticPartition {
            clusters,
            context: shared_context.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn judge_with(table: MockNliTable) -> MockJudge {
        MockJudge::new(table)
    }

    #[test]
    fn reflexive_mock_entails_identity() {
        let j = judge_with(MockNliTable::default());
        assert_eq!(
            j.judge("Paris is the capital of France", "Paris is the capital of France")
                .unwrap(),
            EntailmentLabel::Entailment
        );
    }

    #[test]
    fn synonym_table_entails_both_ways() {
        let a = "ringed sideroblasts indicate iron overload";
        let b = "iron overload is indicated by ringed sideroblasts";
        let j = judge_with(MockNliTable {
            equivalent: vec![vec![a.into(), b.into()]],
            ..Default::default()
        });
        assert_eq!(j.judge(a, b).unwrap(), EntailmentLabel::Entailment);
        assert_eq!(j.judge(b, a).unwrap(), EntailmentLabel::Entailment);
    }

    #[test]
    fn contradiction_rule() {
        let j = judge_with(MockNliTable {
            contradictions: vec![vec!["the answer is yes".into(), "the answer is no".into()]],
            ..Default::default()
        });
        assert_eq!(
            j.judge("the answer is yes", "the answer is no").unwrap(),
            EntailmentLabel::Contradiction
        );
    }

    #[test]
    fn judge_rejects_empty_text() {
        let j = judge_with(MockNliTable::default());
        assert!(j.judge("", "x").is_err());
    }

    #[test]
    fn context_is_prefixed_with_separator() {
        let j = judge_with(MockNliTable {
            pairs: vec![
                MockPair {
                    premise: "Q? [SEP] a".into(),
                    hypothesis: "Q? [SEP] b".into(),
                    label: EntailmentLabel::Entailment,
                },
                MockPair {
                    premise: "Q? [SEP] b".into(),
                    hypothesis: "Q? [SEP] a".into(),
                    label: EntailmentLabel::Entailment,
                },
            ],
            ..Default::default()
        });
        let e = Entailer::new(&j, EntailmentConfig::default());
        assert!(e.bidirectionally_equivalent("a", "b", "Q?").unwrap());
        let raw = Entailer::new(
            &j,
            EntailmentConfig {
                include_context: false,
                ..Default::default()
            },
        );
        assert!(!raw.bidirectionally_equivalent("a", "b", "Q?").unwrap());
    }

    #[test]
    fn one_directional_is_not_equivalent() {
        let j = judge_with(MockNliTable {
            pairs: vec![MockPair {
                premise: "a".into(),
                hypothesis: "b".into(),
                label: EntailmentLabel::Entailment,
            }],
            ..Default::default()
        });
        let e = Entailer::new(&j, EntailmentConfig::default());
        assert!(!e.bidirectionally_equivalent("a", "b", "").unwrap());
        assert!(e.bidirectionally_equivalent("a", "a", "").unwrap());
    }

    #[test]
    fn clusters_yes_no_yes() {
        let j = judge_with(MockNliTable::default());
        let e = Entailer::new(&j, EntailmentConfig::default());
        let p = e.cluster_semantically(&["yes", "no", "yes"], "Q").unwrap();
        assert_eq!(p.clusters, vec![vec![0, 2], vec![1]]);
        let p = e.cluster_semantically(&["yes", "yes", "yes"], "Q").unwrap();
        assert_eq!(p.clusters, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn partition_validation() {
        let ok = SemanticPartition {
            clusters: vec![vec![0, 2], vec![1]],
            context: String::new(),
        };
        assert!(ok.validate(3).is_ok());
        assert!(ok.validate(4).is_err());
        let dup = SemanticPartition {
            clusters: vec![vec![0, 1], vec![1]],
            context: String::new(),
        };
        assert!(dup.validate(2).is_err());
        let empty = SemanticPartition {
            clusters: vec![vec![0], vec![]],
            context: String::new(),
        };
        assert!(empty.validate(1).is_err());
    }

    #[test]
    fn nli_reply_parsing() {
        assert_eq!(
            parse_nli_reply(&json!({"label": "Entailment", "scores": {}})).unwrap(),
            EntailmentLabel::Entailment
        );
        assert!(matches!(
            parse_nli_reply(&json!({"scores": {}})),
            Err(Error::Protocol(_))
        ));
        assert!(matches!(
            parse_nli_reply(&json!({"label": "maybe"})),
            Err(Error::Protocol(_))
        ));
    }
}
