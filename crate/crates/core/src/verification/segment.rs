//! Splitting a model reply into its definitive answer and explanation steps.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationStep {
    pub index: usize,
    pub text: String,
}

/// Sentences with fewer whitespace tokens are dropped in sentence mode.
pub const MIN_SENTENCE_TOKENS: usize = 3;

const ABBREVIATIONS: &[&str] = &[
    "e.g", "i.e", "eg", "ie", "dr", "mr", "mrs", "ms", "prof", "vs", "al", "fig", "approx", "no",
    "st", "jr", "sr", "inc", "ca", "resp", "u.s", "vol", "ref", "min", "max",
];

fn numbered_marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:^|\s)(\d{1,2})[.)]\s+").unwrap())
}

fn bullet_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*[-*•]\s+(.*)$").unwrap())
}

fn sentence_end_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"[.!?]+["')\]]*\s+"#).unwrap())
}

fn answer_header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*\**\s*(?:final\s+)?answer\s*\**\s*[:\-]").unwrap())
}

fn explanation_label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^\s*\**\s*(?:step[- ]by[- ]step\s+)?explanation\s*\**\s*:?\s*").unwrap()
    })
}

/// Items of an explicit numbered or bulleted list, if the text has one.
///
/// Numbered items must run 1, 2, 3, ...; a single item counts only when its
/// marker starts a line.
pub(crate) fn list_items(text: &str) -> Option<Vec<String>> {
    let markers: Vec<(usize, usize, usize, bool)> = numbered_marker_re()
        .captures_iter(text)
        .filter_map(|c| {
            let num = c.get(1)?;
            let n: usize = num.as_str().parse().ok()?;
            let line_start = text[..num.start()]
                .rsplit('\n')
                .next()
                .map_or(true, |prefix| prefix.trim().is_empty());
            Some((n, num.start(), c.get(0)?.end(), line_start))
        })
        .collect();

    let mut chain = Vec::new();
    let mut expected = 1;
    for m in &markers {
        if m.0 == expected {
            chain.push(*m);
            expected += 1;
        }
    }
    if chain.len() >= 2 || (chain.len() == 1 && chain[0].3) {
        let items = chain
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let end = chain.get(i + 1).map_or(text.len(), |next| next.1);
                let item = &text[m.2..end];
                // a blank line ends the final item
                let item = if i + 1 == chain.len() {
                    item.split("\n\n").next().unwrap_or(item)
                } else {
                    item
                };
                collapse_ws(item)
            })
            .filter(|s| !s.is_empty())
            .collect();
        return Some(items);
    }

    let mut bullets: Vec<String> = Vec::new();
    let mut in_bullet = false;
    for line in text.lines() {
        if let Some(c) = bullet_re().captures(line) {
            bullets.push(c[1].to_string());
            in_bullet = true;
        } else if in_bullet && !line.trim().is_empty() && line.starts_with(char::is_whitespace) {
            let last = bullets.last_mut().expect("in_bullet implies an item");
            last.push(' ');
            last.push_str(line.trim());
        } else {
            in_bullet = false;
        }
    }
    if bullets.is_empty() {
        return None;
    }
    Some(
        bullets
            .into_iter()
            .map(|b| collapse_ws(&b))
            .filter(|s| !s.is_empty())
            .collect(),
    )
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn ends_with_abbreviation(before: &str) -> bool {
    let word = before
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(['(', '"', '\''])
        .to_lowercase();
    // single-letter initials such as "J." or "A."
    if word.chars().count() == 1 && word.chars().all(char::is_alphabetic) {
        return true;
    }
    ABBREVIATIONS.contains(&word.as_str())
}

/// Split at `.`, `?` or `!` followed by whitespace and a capital letter,
/// skipping known abbreviations. Blank lines always split.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for para in text.split("\n\n") {
        let mut start = 0;
        for m in sentence_end_re().find_iter(para) {
            let next = para[m.end()..].chars().next();
            if !next.is_some_and(char::is_uppercase) {
                continue;
            }
            let punct_at = m.start();
            if para[m.start()..].starts_with('.') && ends_with_abbreviation(&para[start..punct_at]) {
                continue;
            }
            let end = m.end();
            out.push(collapse_ws(&para[start..end]));
            start = end;
        }
        out.push(collapse_ws(&para[start..]));
    }
    out.retain(|s| !s.is_empty());
    out
}

/// Explanation text → ordered steps.
///
/// Explicit list items are taken as-is. Without a list, the text is split
/// into sentences and sentences shorter than three tokens are dropped.
pub fn segment_explanation(text: &str) -> Vec<ExplanationStep> {
    let pieces = match list_items(text) {
        Some(items) => items,
        None => split_sentences(text)
            .into_iter()
            .filter(|s| s.split_whitespace().count() >= MIN_SENTENCE_TOKENS)
            .collect(),
    };
    pieces
        .into_iter()
        .enumerate()
        .map(|(index, text)| ExplanationStep { index, text })
        .collect()
}

/// Separate the answer statement from the explanation.
///
/// The answer is the first sentence (or line) of the reply, normally an
/// `Answer: ...` line; everything after it is the explanation, minus an
/// optional leading `Explanation:` label.
pub fn split_answer(reply: &str) -> (String, String) {
    let reply = reply.trim_start();
    let first_line_end = reply.find('\n').unwrap_or(reply.len());
    let first_line = &reply[..first_line_end];

    let body_start = answer_header_re().find(first_line).map_or(0, |m| m.end());
    let answer_end = sentence_end_re()
        .find(&first_line[body_start..])
        .map_or(first_line.len(), |m| body_start + m.end());

    let answer = first_line[..answer_end].trim().to_string();
    let rest = &reply[answer_end..];
    let rest = explanation_label_re().replace(rest.trim_start(), "");
    (answer, rest.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(steps: &[ExplanationStep]) -> Vec<&str> {
        steps.iter().map(|s| s.text.as_str()).collect()
    }

    #[test]
    fn inline_numbered_list() {
        assert_eq!(texts(&segment_explanation("1. A. 2. B.")), ["A.", "B."]);
    }

    #[test]
    fn empty_text() {
        assert!(segment_explanation("").is_empty());
        assert!(segment_explanation("   \n").is_empty());
    }

    #[test]
    fn indices_are_contiguous() {
        let steps = segment_explanation("1. First claim here.\n2. Second claim here.\n3. Third one.");
        assert_eq!(steps.iter().map(|s| s.index).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn sentence_fallback_with_abbreviations() {
        let t = "Aspirin inhibits COX enzymes, e.g. COX-1 and COX-2. This reduces thromboxane synthesis. Ok then.";
        assert_eq!(
            texts(&segment_explanation(t)),
            [
                "Aspirin inhibits COX enzymes, e.g. COX-1 and COX-2.",
                "This reduces thromboxane synthesis."
            ]
        );
    }

    #[test]
    fn bullets() {
        let t = "- Iron overload causes ringed sideroblasts.\n- Marrow biopsy shows\n  the finding.\n";
        assert_eq!(
            texts(&segment_explanation(t)),
            ["Iron overload causes ringed sideroblasts.", "Marrow biopsy shows the finding."]
        );
    }

    #[test]
    fn decimals_are_not_list_markers() {
        let t = "The dose was 2.5 mg per day. Patients improved within 3 days overall.";
        assert_eq!(segment_explanation(t).len(), 2);
    }

    #[test]
    fn split_answer_line() {
        let (a, e) = split_answer("Answer: yes.\n1. Statement A.\n2. Statement B.");
        assert_eq!(a, "Answer: yes.");
        assert_eq!(e, "1. Statement A.\n2. Statement B.");
        let (a, e) = split_answer("Answer: (B) aspirin. Aspirin blocks platelets. It acts irreversibly on COX.");
        assert_eq!(a, "Answer: (B) aspirin.");
        assert_eq!(e, "Aspirin blocks platelets. It acts irreversibly on COX.");
        let (a, e) = split_answer("Answer: no\nExplanation: The trial was small.");
        assert_eq!(a, "Answer: no");
        assert_eq!(e, "The trial was small.");
    }
}
