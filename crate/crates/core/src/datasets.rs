//! Loaders for PubMedQA, MedQA and MedMCQA, answer parsing and grading.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Pubmedqa,
    Medqa,
    Medmcqa,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 3] = [DatasetKind::Pubmedqa, DatasetKind::Medqa, DatasetKind::Medmcqa];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Pubmedqa => "pubmedqa",
            DatasetKind::Medqa => "medqa",
            DatasetKind::Medmcqa => "medmcqa",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DatasetKind::Pubmedqa => "PubMedQA",
            DatasetKind::Medqa => "MedQA",
            DatasetKind::Medmcqa => "MedMCQA",
        }
    }

    pub fn is_ternary(self) -> bool {
        self == DatasetKind::Pubmedqa
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase();
        DatasetKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown dataset `{s}`")))
    }
}

pub const TERNARY_LABELS: [&str; 3] = ["yes", "no", "maybe"];

/// One benchmark question, normalized across the three source formats.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QARecord {
    pub id: String,
    pub dataset: DatasetKind,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<BTreeMap<String, String>>,
    pub gold: String,
}

impl QARecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.question.trim().is_empty() {
            return Err("empty question".into());
        }
        if self.dataset.is_ternary() {
            if self.context.as_deref().map_or(true, |c| c.trim().is_empty()) {
                return Err("PubMedQA record without context".into());
            }
            if !TERNARY_LABELS.contains(&self.gold.as_str()) {
                return Err(format!("gold `{}` is not yes/no/maybe", self.gold));
            }
        } else {
            let opts = self.options.as_ref().ok_or("multiple-choice record without options")?;
            if opts.len() < 2 {
                return Err(format!("only {} option(s)", opts.len()));
            }
            if !opts.contains_key(&self.gold) {
                return Err(format!("gold `{}` is not an option label", self.gold));
            }
        }
        Ok(())
    }

    /// Option labels in order (`A`, `B`, ...); empty for ternary records.
    pub fn labels(&self) -> Vec<&str> {
        self.options
            .as_ref()
            .map(|o| o.keys().map(String::as_str).collect())
            .unwrap_or_default()
    }

    /// `A. text` lines, one per option.
    pub fn options_block(&self) -> String {
        self.options
            .as_ref()
            .map(|o| {
                o.iter()
                    .map(|(k, v)| format!("{k}. {v}"))
                    .collect::<Vec<_>>()
                    .join("\n")
            })
            .unwrap_or_default()
    }

    /// Text of the gold answer: the ternary label or `B. aspirin`.
    pub fn gold_text(&self) -> String {
        match self.options.as_ref().and_then(|o| o.get(&self.gold)) {
            Some(text) => format!("{}. {}", self.gold, text),
            None => self.gold.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case, dead_code)]
struct PubMedQaRaw {
    QUESTION: String,
    CONTEXTS: Vec<String>,
    final_decision: String,
    #[serde(default)]
    LABELS: Option<Vec<String>>,
    #[serde(default)]
    MESHES: Option<Vec<String>>,
    #[serde(default)]
    YEAR: Option<Value>,
    #[serde(default)]
    reasoning_required_pred: Option<String>,
    #[serde(default)]
    reasoning_free_pred: Option<String>,
    #[serde(default)]
    LONG_ANSWER: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct MedQaRaw {
    #[serde(default)]
    id: Option<String>,
    question: String,
    options: BTreeMap<String, String>,
    answer_idx: String,
    #[serde(default)]
    answer: Option<String>,
    #[serde(default)]
    meta_info: Option<String>,
    #[serde(default)]
    metamap_phrases: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct MedMcqaRaw {
    id: String,
    question: String,
    opa: String,
    opb: String,
    opc: String,
    opd: String,
    cop: u8,
    #[serde(default)]
    exp: Option<String>,
    #[serde(default)]
    subject_name: Option<String>,
    #[serde(default)]
    topic_name: Option<String>,
    #[serde(default)]
    choice_type: Option<String>,
}

/// Load a dataset in its published distribution format. Any bad record
/// aborts the load; the error lists every failure with its record id.
pub fn load_dataset(kind: DatasetKind, path: &Path) -> Result<Vec<QARecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (records, mut failures) = match kind {
        DatasetKind::Pubmedqa => parse_pubmedqa(&text, path)?,
        DatasetKind::Medqa => parse_jsonl(&text, |line_no, v| medqa_record(line_no, v)),
        DatasetKind::Medmcqa => parse_jsonl(&text, |_, v| medmcqa_record(v)),
    };
    let mut seen = HashSet::new();
    for r in &records {
        if let Err(msg) = r.validate() {
            failures.push(format!("record {}: {msg}", r.id));
        }
        if !seen.insert(r.id.as_str()) {
            failures.push(format!("record {}: duplicate id", r.id));
        }
    }
    if !failures.is_empty() {
        return Err(Error::DatasetParse {
            path: path.to_path_buf(),
            failures,
        });
    }
    Ok(records)
}

fn parse_pubmedqa(text: &str, path: &Path) -> Result<(Vec<QARecord>, Vec<String>)> {
    let map: serde_json::Map<String, Value> = serde_json::from_str(text).map_err(|e| Error::DatasetParse {
        path: path.to_path_buf(),
        failures: vec![format!("not a JSON object keyed by article id: {e}")],
    })?;
    let mut ids: Vec<&String> = map.keys().collect();
    ids.sort();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for id in ids {
        match serde_json::from_value::<PubMedQaRaw>(map[id].clone()) {
            Ok(raw) => records.push(QARecord {
                id: id.clone(),
                dataset: DatasetKind::Pubmedqa,
                question: raw.QUESTION.trim().to_string(),
                context: Some(raw.CONTEXTS.join("\n")),
                options: None,
                gold: raw.final_decision.trim().to_lowercase(),
            }),
            Err(e) => failures.push(format!("record {id}: {e}")),
        }
    }
    Ok((records, failures))
}

fn parse_jsonl<F>(text: &str, mut build: F) -> (Vec<QARecord>, Vec<String>)
where
    F: FnMut(usize, Value) -> std::result::Result<QARecord, String>,
{
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                failures.push(format!("line {line_no}: invalid JSON: {e}"));
                continue;
            }
        };
        let id_hint = value
            .get("id")
            .and_then(Value::as_str)
            .map(|s| format!(" (id {s})"))
            .unwrap_or_default();
        match build(line_no, value) {
            Ok(r) => records.push(r),
            Err(msg) => failures.push(format!("line {line_no}{id_hint}: {msg}")),
        }
    }
    (records, failures)
}

fn medqa_record(line_no: usize, value: Value) -> std::result::Result<QARecord, String> {
    let raw: MedQaRaw = serde_json::from_value(value).map_err(|e| e.to_string())?;
    let gold = raw.answer_idx.trim().to_uppercase();
    let options: BTreeMap<String, String> = raw
        .options
        .into_iter()
        .map(|(k, v)| (k.trim().to_uppercase(), v.trim().to_string()))
        .collect();
    if let (Some(answer), Some(text)) = (raw.answer.as_deref(), options.get(&gold)) {
        if answer.trim() != text {
            return Err(format!(
                "answer `{answer}` does not match option {gold} `{text}`"
            ));
        }
    }
    Ok(QARecord {
        id: raw.id.unwrap_or_else(|| format!("medqa-{line_no}")),
        dataset: DatasetKind::Medqa,
        question: raw.question.trim().to_string(),
        context: None,
        options: Some(options),
        gold,
    })
}

fn medmcqa_record(value: Value) -> std::result::Result<QARecord, String> {
    let raw: MedMcqaRaw = serde_json::from_value(value).map_err(|e| e.to_string())?;
    // correct-option index is 1-based: 1 → A ... 4 → D
    let gold = match raw.cop {
        1 => "A",
        2 => "B",
        3 => "C",
        4 => "D",
        other => return Err(format!("correct-option index {other} outside 1..=4")),
    };
    let options = BTreeMap::from([
        ("A".to_string(), raw.opa.trim().to_string()),
        ("B".to_string(), raw.opb.trim().to_string()),
        ("C".to_string(), raw.opc.trim().to_string()),
        ("D".to_string(), raw.opd.trim().to_string()),
    ]);
    Ok(QARecord {
        id: raw.id,
        dataset: DatasetKind::Medmcqa,
        question: raw.question.trim().to_string(),
        context: None,
        options: Some(options),
        gold: gold.to_string(),
    })
}

/// First `limit` records after a seeded shuffle; all records, in file
/// order, when `limit` is `None`.
pub fn subsample(records: Vec<QARecord>, limit: Option<usize>, seed: u64) -> Vec<QARecord> {
    match limit {
        None => records,
        Some(n) => {
            let mut records = records;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            records.shuffle(&mut rng);
            records.truncate(n);
            records
        }
    }
}

pub fn export_jsonl<W: Write>(records: &[QARecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")
            .map_err(|e| Error::io("<export>", e))?;
    }
    Ok(())
}

fn ternary_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(yes|no|maybe)\b").unwrap())
}

fn option_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(concat!(
            r"(?i:\boption\s+)([A-Ja-j])\b",
            r"|(?i:\banswer(?:\s+is)?)\s*[:\-]?\s*\(?([A-J])\b",
            r"|\(\s*([A-J])\b",
            r"|\b([A-J])\)",
            r"|\b([A-J])\.(?:\s|$)",
        ))
        .unwrap()
    })
}

/// Extract the answer label from a model reply.
///
/// Ternary records: first standalone yes/no/maybe. Multiple-choice: first
/// option-letter pattern naming a real option, else the one option whose
/// full text the reply contains.
pub fn parse_answer(reply: &str, record: &QARecord) -> Option<String> {
    if record.dataset.is_ternary() {
        return ternary_re()
            .captures(reply)
            .map(|c| c[1].to_ascii_lowercase());
    }
    let options = record.options.as_ref()?;
    for caps in option_re().captures_iter(reply) {
        let label = caps
            .iter()
            .skip(1)
            .flatten()
            .next()
            .map(|m| m.as_str().to_ascii_uppercase())?;
        if options.contains_key(&label) {
            return Some(label);
        }
    }
    let lower = reply.to_lowercase();
    let mut hits = options
        .iter()
        .filter(|(_, text)| !text.trim().is_empty() && lower.contains(&text.to_lowercase()));
    match (hits.next(), hits.next()) {
        (Some((label, _)), None) => Some(label.clone()),
        _ => None,
    }
}

/// Label equality after normalization. An unparsed answer is incorrect.
pub fn grade(parsed: Option<&str>, record: &QARecord) -> bool {
    let Some(parsed) = parsed else {
        return false;
    };
    let norm = |s: &str| {
        if record.dataset.is_ternary() {
            s.trim().to_lowercase()
        } else {
            s.trim().to_uppercase()
        }
    };
    norm(parsed) == norm(&record.gold)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn mcq(options: &[(&str, &str)], gold: &str) -> QARecord {
        QARecord {
            id: "m1".into(),
            dataset: DatasetKind::Medqa,
            question: "Which drug?".into(),
            context: None,
            options: Some(
                options
                    .iter()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect(),
            ),
            gold: gold.into(),
        }
    }

    fn ternary() -> QARecord {
        QARecord {
            id: "p1".into(),
            dataset: DatasetKind::Pubmedqa,
            question: "Does it work?".into(),
            context: Some("ctx".into()),
            options: None,
            gold: "yes".into(),
        }
    }

    #[test]
    fn ternary_parse() {
        assert_eq!(parse_answer("Answer: Yes. Because…", &ternary()).as_deref(), Some("yes"));
        assert_eq!(parse_answer("Maybe, not sure", &ternary()).as_deref(), Some("maybe"));
        assert_eq!(parse_answer("Noted. It is unclear", &ternary()), None);
    }

    #[test]
    fn option_parse() {
        let r = mcq(&[("A", "heparin"), ("B", "aspirin"), ("C", "warfarin")], "B");
        assert_eq!(parse_answer("The correct option is (B) aspirin", &r).as_deref(), Some("B"));
        assert_eq!(parse_answer("I pick warfarin here", &r).as_deref(), Some("C"));
        assert_eq!(parse_answer("The answer is a drug", &r), None);
    }

    #[test]
    fn grading() {
        assert!(grade(Some("yes"), &ternary()));
        assert!(grade(Some(" YES "), &ternary()));
        assert!(!grade(Some("maybe"), &ternary()));
        assert!(!grade(None, &ternary()));
    }

    #[test]
    fn subsample_is_seeded() {
        let recs: Vec<QARecord> = (0..10)
            .map(|i| QARecord {
                id: format!("p{i}"),
                ..ternary()
            })
            .collect();
        let a = subsample(recs.clone(), Some(4), 7);
        let b = subsample(recs.clone(), Some(4), 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert_eq!(subsample(recs.clone(), None, 7), recs);
    }

    #[test]
    fn validation_rules() {
        let mut r = ternary();
        r.gold = "probably".into();
        assert!(r.validate().is_err());
        let r = mcq(&[("A", "x")], "A");
        assert!(r.validate().is_err());
        let r = mcq(&[("A", "x"), ("B", "y")], "C");
        assert!(r.validate().is_err());
    }
}
